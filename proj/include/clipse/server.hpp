#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "clipse/embedding.hpp"
#include "clipse/index.hpp"
#include "clipse/shard.hpp"

namespace clipse {

struct ServerConfig {
  std::optional<std::filesystem::path> index_path;
  std::optional<std::filesystem::path> shard_manifest;
  std::filesystem::path images_root = ".";
  std::string bind_address = "127.0.0.1:8080";
  std::size_t default_page_size = 20;
  // Static web UI bundle; a minimal built-in page is served at "/" when unset.
  std::optional<std::filesystem::path> web_root;
};

// Throws std::invalid_argument unless exactly one of index_path and
// shard_manifest is set and default_page_size >= 1.
void validate(const ServerConfig& config);

// Splits "host:port"; throws std::invalid_argument.
std::pair<std::string, int> parse_bind_address(const std::string& address);

// What the server answers from once startup loading has finished.
struct ServingState {
  std::shared_ptr<const SearchIndex> index;    // single-index mode
  std::shared_ptr<const ShardSet> shards;      // scatter-gather mode
};

// Produces the serving state; runs on a background thread after start().
using StateLoader = std::function<ServingState()>;

// Loads the index (preferring a sibling .csix over .json) or opens the shard
// manifest named in `config`.
ServingState load_serving_state(const ServerConfig& config);

// HTTP front end. Routes:
//   GET  /api/health            status, record count, model
//   GET  /api/search            q, page, page_size, k -> ranked page
//   POST /api/shard/topk        embedded query -> local top-k (shard protocol)
//   GET  /images/<path>         image bytes, indexed paths only
//   GET  /                      web UI assets
// API routes answer 503 until the loader has finished.
class Server {
 public:
  Server(ServerConfig config, ProviderPtr provider, StateLoader loader = {});
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds (port 0 picks a free port), starts loading and serving on
  // background threads, and returns the bound port. Throws IoError when the
  // address cannot be bound.
  int start();
  void stop();

  bool ready() const;
  bool wait_ready(std::chrono::milliseconds timeout) const;
  // Non-empty when the loader failed; the server then keeps answering 503.
  std::string load_error() const;
  int port() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace clipse
