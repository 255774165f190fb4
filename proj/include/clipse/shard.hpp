#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clipse/embedding.hpp"
#include "clipse/index.hpp"
#include "clipse/search.hpp"

namespace clipse {

struct ShardEntry {
  std::size_t shard_id = 0;
  std::size_t record_count = 0;  // 0 when not known from the manifest alone
  std::string endpoint;          // CSIX file path or http(s) base URL
};

struct ShardManifest {
  IndexDescriptor descriptor;
  std::vector<ShardEntry> shards;

  std::size_t shard_count() const noexcept { return shards.size(); }
};

// Manifest file: {"format":"clipse-shards","version":1,"model_id":...,
// "dimension":...,"shards":[{"id":0,"endpoint":"..."}, ...]}.
// Parsing throws FormatError; shard ids must be exactly 0..n-1.
std::string manifest_to_json(const ShardManifest& manifest);
ShardManifest manifest_from_json(std::string_view text);
void save_manifest(const ShardManifest& manifest, const std::filesystem::path& file);
// Relative file endpoints are resolved against the manifest's directory.
ShardManifest load_manifest(const std::filesystem::path& file);

bool is_http_endpoint(std::string_view endpoint) noexcept;

// Round-robin over the path-sorted records: record i goes to shard i % n.
// Throws InvalidShardCount unless 1 <= n <= index.size().
std::vector<SearchIndex> split_index(const SearchIndex& index, std::size_t n);

// Merges per-shard ranked lists (each ordered score desc, path asc) into the
// global top-k with ranks reassigned from 1. k == 0 keeps everything.
// Throws DuplicatePathError when a path appears in more than one list.
std::vector<RankedResult> merge_partials(std::span<const std::vector<RankedResult>> partials,
                                         std::size_t k);

// One shard as seen by the coordinator.
class ShardBackend {
 public:
  virtual ~ShardBackend() = default;
  // Local top-k for an already embedded query (k == 0: all records).
  // Any exception marks the shard as failed for this query.
  virtual std::vector<RankedResult> top_k(const EmbeddingVector& query, std::size_t k) const = 0;
  virtual std::string describe() const = 0;
  // Number of records when known, else 0.
  virtual std::size_t record_count() const noexcept { return 0; }
};

// Serves a resident index.
class LocalShard final : public ShardBackend {
 public:
  explicit LocalShard(std::shared_ptr<const SearchIndex> index, std::string label = "memory");
  std::vector<RankedResult> top_k(const EmbeddingVector& query, std::size_t k) const override;
  std::string describe() const override { return label_; }
  std::size_t record_count() const noexcept override { return index_->size(); }
  const SearchIndex& index() const noexcept { return *index_; }

 private:
  std::shared_ptr<const SearchIndex> index_;
  std::string label_;
};

// Forwards the embedded query to a server instance over POST /api/shard/topk.
class HttpShard final : public ShardBackend {
 public:
  HttpShard(std::string base_url, std::string model_id);
  std::vector<RankedResult> top_k(const EmbeddingVector& query, std::size_t k) const override;
  std::string describe() const override { return base_url_; }

 private:
  std::string base_url_;
  std::string model_id_;
};

// A shard that could not be opened; every query fails with the stored reason.
class UnavailableShard final : public ShardBackend {
 public:
  UnavailableShard(std::string endpoint, std::string reason)
      : endpoint_(std::move(endpoint)), reason_(std::move(reason)) {}
  std::vector<RankedResult> top_k(const EmbeddingVector&, std::size_t) const override;
  std::string describe() const override { return endpoint_; }

 private:
  std::string endpoint_;
  std::string reason_;
};

struct ShardFailure {
  std::size_t shard_id = 0;
  std::string reason;
};

struct ScatterResult {
  std::vector<RankedResult> results;
  std::vector<ShardFailure> failed;  // sorted by shard_id

  bool degraded() const noexcept { return !failed.empty(); }
};

class ShardSet {
 public:
  struct Member {
    std::size_t shard_id;
    std::shared_ptr<const ShardBackend> backend;
  };

  ShardSet(IndexDescriptor descriptor, std::vector<Member> members);

  // Opens every manifest entry. Local files are loaded now; a file that fails
  // to load or has a different model becomes an UnavailableShard.
  static ShardSet open(const ShardManifest& manifest);
  // In-memory shards, ids in order.
  static ShardSet from_indexes(std::vector<SearchIndex> shards);

  const IndexDescriptor& descriptor() const noexcept { return descriptor_; }
  const std::vector<Member>& members() const noexcept { return members_; }
  std::size_t known_record_count() const noexcept;

  // Asks every shard for its local top-k concurrently and merges. Shards that
  // throw are reported in `failed`. Throws AllShardsFailed when none answered.
  ScatterResult query(const EmbeddingVector& query, std::size_t k) const;

 private:
  IndexDescriptor descriptor_;
  std::vector<Member> members_;
};

// Embeds `text` once and scatters it. Throws ProviderError when the provider's
// model differs from the shard set's, and AllShardsFailed.
ScatterResult scatter_query(const ShardSet& shards, std::string_view text, std::size_t k,
                            const EmbeddingProvider& provider);

}  // namespace clipse
