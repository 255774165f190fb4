#include "clipse/server.hpp"

#include <algorithm>
#include <charconv>
#include <condition_variable>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <unordered_set>

#include <httplib.h>
#include <json.hpp>

#include "clipse/image.hpp"
#include "clipse/search.hpp"
#include "wire.hpp"

namespace clipse {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::size_t kMaxPageSize = 1000;

constexpr const char* kFallbackPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>clipse</title></head>
<body>
<h1>clipse</h1>
<p>No web UI bundle configured (start the server with <code>--web-root DIR</code>).</p>
<p>API: <code>GET /api/search?q=TEXT&amp;page=1&amp;page_size=20</code>,
<code>GET /api/health</code>, <code>GET /images/PATH</code>.</p>
</body></html>
)";

// Strict decimal parse of an optional query parameter. Returns false when the
// parameter is present but not an integer in [min, max].
bool int_param(const httplib::Request& req, const char* name, std::size_t min, std::size_t max,
               std::optional<std::size_t>& out) {
  if (!req.has_param(name)) return true;
  const std::string value = req.get_param_value(name);
  if (value.empty()) return false;
  std::size_t parsed = 0;
  auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), parsed);
  if (ec != std::errc() || end != value.data() + value.size()) return false;
  if (parsed < min || parsed > max) return false;
  out = parsed;
  return true;
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

void validate(const ServerConfig& config) {
  if (config.index_path.has_value() == config.shard_manifest.has_value()) {
    throw std::invalid_argument("exactly one of an index path and a shard manifest must be set");
  }
  if (config.default_page_size < 1) throw std::invalid_argument("page size must be at least 1");
  parse_bind_address(config.bind_address);
}

std::pair<std::string, int> parse_bind_address(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == address.size()) {
    throw std::invalid_argument("bind address must be HOST:PORT, got \"" + address + "\"");
  }
  std::string host = address.substr(0, colon);
  if (host.size() >= 2 && host.front() == '[' && host.back() == ']') {
    host = host.substr(1, host.size() - 2);
  }
  int port = 0;
  const auto* first = address.data() + colon + 1;
  const auto* last = address.data() + address.size();
  auto [end, ec] = std::from_chars(first, last, port);
  if (ec != std::errc() || end != last || port < 0 || port > 65535) {
    throw std::invalid_argument("invalid port in bind address \"" + address + "\"");
  }
  return {host, port};
}

ServingState load_serving_state(const ServerConfig& config) {
  ServingState state;
  if (config.shard_manifest) {
    state.shards = std::make_shared<const ShardSet>(ShardSet::open(load_manifest(*config.shard_manifest)));
    return state;
  }
  fs::path path = *config.index_path;
  if (path.extension() == ".json") {
    auto binary = path;
    binary.replace_extension(".csix");
    std::error_code ec;
    if (fs::is_regular_file(binary, ec)) path = binary;
  }
  state.index = std::make_shared<const SearchIndex>(load_index(path));
  return state;
}

struct Server::Impl {
  ServerConfig config;
  ProviderPtr provider;
  StateLoader loader;
  httplib::Server http;
  int port = 0;

  mutable std::mutex mutex;
  mutable std::condition_variable loaded_cv;
  std::shared_ptr<const ServingState> state;
  std::unordered_set<std::string> image_whitelist;  // shard mode only
  std::string load_error;
  bool load_finished = false;

  std::thread listener;
  std::thread loader_thread;

  std::shared_ptr<const ServingState> current() const {
    std::lock_guard lock(mutex);
    return state;
  }

  void finish_load(std::shared_ptr<const ServingState> s, std::string error) {
    {
      std::lock_guard lock(mutex);
      if (s && s->shards) {
        for (const auto& m : s->shards->members()) {
          if (auto* local = dynamic_cast<const LocalShard*>(m.backend.get())) {
            const auto& paths = local->index().paths();
            image_whitelist.insert(paths.begin(), paths.end());
          }
        }
      }
      state = std::move(s);
      load_error = std::move(error);
      load_finished = true;
    }
    loaded_cv.notify_all();
  }

  bool reject_if_loading(const ServingState* s, httplib::Response& res) const {
    if (s) return false;
    std::string error;
    {
      std::lock_guard lock(mutex);
      error = load_error;
    }
    json body{{"status", error.empty() ? "loading" : "error"}};
    if (!error.empty()) body["message"] = error;
    send_json(res, 503, body);
    return true;
  }

  void health(const httplib::Request&, httplib::Response& res) const {
    auto s = current();
    if (reject_if_loading(s.get(), res)) return;
    const IndexDescriptor& d = s->index ? s->index->descriptor() : s->shards->descriptor();
    const std::size_t records = s->index ? s->index->size() : s->shards->known_record_count();
    json body{{"status", "ok"}, {"records", records}, {"model_id", d.model_id},
              {"dimension", d.dimension}};
    if (s->shards) body["shards"] = s->shards->members().size();
    send_json(res, 200, body);
  }

  void search(const httplib::Request& req, httplib::Response& res) const {
    auto s = current();
    if (reject_if_loading(s.get(), res)) return;
    if (!req.has_param("q")) {
      send_json(res, 400, {{"error", "missing query parameter q"}});
      return;
    }
    std::optional<std::size_t> page, page_size, k;
    const auto max = std::numeric_limits<std::size_t>::max() / 2;
    if (!int_param(req, "page", 1, max, page) ||
        !int_param(req, "page_size", 1, kMaxPageSize, page_size) ||
        !int_param(req, "k", 1, max, k)) {
      send_json(res, 400, {{"error", "page, page_size and k must be positive integers "
                                     "(page_size at most 1000)"}});
      return;
    }
    const std::string query = req.get_param_value("q");
    const std::size_t p = page.value_or(1);
    const std::size_t size = page_size.value_or(config.default_page_size);

    const auto started = std::chrono::steady_clock::now();
    Page result;
    std::vector<ShardFailure> failed;
    try {
      const auto embedding = provider->embed_text(query);
      if (s->index) {
        const auto scores = score_all(*s->index, embedding);
        const std::size_t total = std::min(k.value_or(scores.size()), scores.size());
        // top-m is a prefix of top-total, so only the rows up to this page are ranked.
        const std::size_t needed = p - 1 <= total / size ? std::min(total, p * size) : 1;
        const auto ranked = top_k(scores, needed);
        result = paginate(ranked, p, size);
        result.total = total;
      } else {
        auto scattered = s->shards->query(embedding, k.value_or(0));
        failed = std::move(scattered.failed);
        result = paginate(scattered.results, p, size);
      }
    } catch (const AllShardsFailed& e) {
      send_json(res, 502, {{"error", e.what()}});
      return;
    } catch (const Error& e) {
      send_json(res, 500, {{"error", e.what()}});
      return;
    }
    const double elapsed_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
            .count();

    json body{{"query", query},
              {"total", result.total},
              {"page", result.page},
              {"page_size", result.page_size},
              {"elapsed_ms", elapsed_ms},
              {"results", wire::results_to_json(result.results)}};
    if (!failed.empty()) {
      auto ids = json::array();
      for (const auto& f : failed) ids.push_back(f.shard_id);
      body["degraded"] = ids;
    }
    send_json(res, 200, body);
  }

  void shard_topk(const httplib::Request& req, httplib::Response& res) const {
    auto s = current();
    if (reject_if_loading(s.get(), res)) return;
    if (!s->index) {
      send_json(res, 404, {{"error", "this instance coordinates shards and holds no index"}});
      return;
    }
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error&) {
      send_json(res, 400, {{"error", "invalid JSON body"}});
      return;
    }
    if (!body.is_object() || !body.contains("embedding") || !body["embedding"].is_array() ||
        !body.contains("k") || !body["k"].is_number_unsigned()) {
      send_json(res, 400, {{"error", "body must hold an embedding array and an unsigned k"}});
      return;
    }
    if (body.contains("model_id") && body["model_id"] != s->index->model_id()) {
      send_json(res, 409, {{"error", "model mismatch"}, {"model_id", s->index->model_id()}});
      return;
    }
    std::vector<float> values;
    values.reserve(body["embedding"].size());
    for (const auto& v : body["embedding"]) {
      if (!v.is_number()) {
        send_json(res, 400, {{"error", "embedding must hold numbers"}});
        return;
      }
      values.push_back(v.get<float>());
    }
    if (values.size() != s->index->dimension()) {
      send_json(res, 400, {{"error", "embedding dimension mismatch"}});
      return;
    }
    const auto results = clipse::search(*s->index, EmbeddingVector(std::move(values)),
                                        body["k"].get<std::size_t>());
    send_json(res, 200,
              {{"model_id", s->index->model_id()}, {"results", wire::results_to_json(results)}});
  }

  bool whitelisted(const ServingState& s, const std::string& path) const {
    if (s.index) return s.index->find(path).has_value();
    std::lock_guard lock(mutex);
    return image_whitelist.contains(path);
  }

  void image(const httplib::Request& req, httplib::Response& res) const {
    const std::string path = req.matches[1];
    auto s = current();
    if (!s || !is_valid_record_path(path) || !whitelisted(*s, path)) {
      res.status = 404;
      res.set_content("not found", "text/plain");
      return;
    }
    std::error_code ec;
    const auto root = fs::weakly_canonical(config.images_root, ec);
    const auto file = fs::weakly_canonical(config.images_root / path, ec);
    const auto rel = file.lexically_relative(root);
    if (ec || rel.empty() || *rel.begin() == "..") {
      res.status = 404;
      res.set_content("not found", "text/plain");
      return;
    }
    try {
      const auto bytes = read_file(file);
      res.status = 200;
      res.set_content(std::string(bytes.begin(), bytes.end()),
                      std::string(image::content_type_for(path)));
    } catch (const IoError&) {
      res.status = 404;
      res.set_content("not found", "text/plain");
    }
  }
};

Server::Server(ServerConfig config, ProviderPtr provider, StateLoader loader)
    : impl_(std::make_unique<Impl>()) {
  validate(config);
  if (!provider) throw std::invalid_argument("server needs an embedding provider");
  impl_->config = std::move(config);
  impl_->provider = std::move(provider);
  impl_->loader = loader ? std::move(loader)
                         : [cfg = impl_->config] { return load_serving_state(cfg); };

  auto* impl = impl_.get();
  auto& http = impl->http;
  http.Get("/api/health",
           [impl](const httplib::Request& req, httplib::Response& res) { impl->health(req, res); });
  http.Get("/api/search",
           [impl](const httplib::Request& req, httplib::Response& res) { impl->search(req, res); });
  http.Post("/api/shard/topk", [impl](const httplib::Request& req, httplib::Response& res) {
    impl->shard_topk(req, res);
  });
  http.Get(R"(/images/(.+))",
           [impl](const httplib::Request& req, httplib::Response& res) { impl->image(req, res); });
  if (impl->config.web_root) {
    if (!http.set_mount_point("/", impl->config.web_root->string())) {
      throw IoError("web root is not a directory: " + impl->config.web_root->string());
    }
  } else {
    http.Get("/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(kFallbackPage, "text/html; charset=utf-8");
    });
  }
}

Server::~Server() { stop(); }

int Server::start() {
  auto [host, port] = parse_bind_address(impl_->config.bind_address);
  if (port == 0) {
    port = impl_->http.bind_to_any_port(host);
    if (port < 0) throw IoError("cannot bind " + host);
  } else if (!impl_->http.bind_to_port(host, port)) {
    throw IoError("cannot bind " + impl_->config.bind_address);
  }
  impl_->port = port;

  auto* impl = impl_.get();
  impl_->loader_thread = std::thread([impl] {
    try {
      impl->finish_load(std::make_shared<const ServingState>(impl->loader()), "");
    } catch (const std::exception& e) {
      impl->finish_load(nullptr, e.what());
    }
  });
  impl_->listener = std::thread([impl] { impl->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
  return port;
}

void Server::stop() {
  if (!impl_) return;
  impl_->http.stop();
  if (impl_->listener.joinable()) impl_->listener.join();
  if (impl_->loader_thread.joinable()) impl_->loader_thread.join();
}

bool Server::ready() const { return impl_->current() != nullptr; }

bool Server::wait_ready(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(impl_->mutex);
  impl_->loaded_cv.wait_for(lock, timeout, [&] { return impl_->load_finished; });
  return impl_->state != nullptr;
}

std::string Server::load_error() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->load_error;
}

int Server::port() const noexcept { return impl_->port; }

}  // namespace clipse
