#include "clipse/shard.hpp"

#include <algorithm>
#include <future>
#include <queue>
#include <unordered_set>

#include <httplib.h>
#include <json.hpp>

#include "wire.hpp"

namespace clipse {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {
constexpr std::string_view kManifestFormat = "clipse-shards";
constexpr int kManifestVersion = 1;
}  // namespace

bool is_http_endpoint(std::string_view endpoint) noexcept {
  return endpoint.starts_with("http://") || endpoint.starts_with("https://");
}

std::string manifest_to_json(const ShardManifest& manifest) {
  json doc{{"format", kManifestFormat},
           {"version", kManifestVersion},
           {"model_id", manifest.descriptor.model_id},
           {"dimension", manifest.descriptor.dimension},
           {"shards", json::array()}};
  for (const auto& s : manifest.shards) {
    doc["shards"].push_back({{"id", s.shard_id}, {"endpoint", s.endpoint}});
  }
  return doc.dump(2) + "\n";
}

ShardManifest manifest_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError("invalid shard manifest JSON at byte " + std::to_string(e.byte));
  }
  if (!doc.is_object()) throw FormatError("shard manifest must be a JSON object");
  if (doc.value("format", "") != kManifestFormat) {
    throw FormatError("unknown manifest format tag, expected \"clipse-shards\"");
  }
  if (!doc.contains("version") || !doc["version"].is_number_integer() ||
      doc["version"].get<long long>() != kManifestVersion) {
    throw FormatError("unsupported shard manifest version");
  }
  if (!doc.contains("model_id") || !doc["model_id"].is_string() ||
      doc["model_id"].get<std::string>().empty()) {
    throw FormatError("manifest model_id must be a non-empty string");
  }
  if (!doc.contains("dimension") || !doc["dimension"].is_number_unsigned() ||
      doc["dimension"].get<std::size_t>() == 0) {
    throw FormatError("manifest dimension must be a positive integer");
  }
  if (!doc.contains("shards") || !doc["shards"].is_array() || doc["shards"].empty()) {
    throw FormatError("manifest must list at least one shard");
  }

  ShardManifest manifest;
  manifest.descriptor = {doc["model_id"].get<std::string>(), doc["dimension"].get<std::size_t>()};
  for (const auto& s : doc["shards"]) {
    if (!s.is_object() || !s.contains("id") || !s["id"].is_number_unsigned() ||
        !s.contains("endpoint") || !s["endpoint"].is_string() ||
        s["endpoint"].get<std::string>().empty()) {
      throw FormatError("malformed shard entry: " + s.dump());
    }
    manifest.shards.push_back({s["id"].get<std::size_t>(), 0, s["endpoint"].get<std::string>()});
  }
  std::sort(manifest.shards.begin(), manifest.shards.end(),
            [](const ShardEntry& a, const ShardEntry& b) { return a.shard_id < b.shard_id; });
  for (std::size_t i = 0; i < manifest.shards.size(); ++i) {
    if (manifest.shards[i].shard_id != i) {
      throw FormatError("shard ids must be 0.." + std::to_string(manifest.shards.size() - 1) +
                        " without gaps or duplicates");
    }
  }
  return manifest;
}

void save_manifest(const ShardManifest& manifest, const fs::path& file) {
  const auto text = manifest_to_json(manifest);
  write_file_atomic(file, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

ShardManifest load_manifest(const fs::path& file) {
  const auto bytes = read_file(file);
  auto manifest =
      manifest_from_json(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  const auto base = file.parent_path();
  for (auto& s : manifest.shards) {
    if (!is_http_endpoint(s.endpoint) && fs::path(s.endpoint).is_relative()) {
      s.endpoint = (base / s.endpoint).lexically_normal().string();
    }
  }
  return manifest;
}

std::vector<SearchIndex> split_index(const SearchIndex& index, std::size_t n) {
  if (n < 1 || n > index.size()) {
    throw InvalidShardCount("shard count " + std::to_string(n) + " must be in 1.." +
                            std::to_string(index.size()));
  }
  const std::size_t dim = index.dimension();
  std::vector<std::vector<std::string>> paths(n);
  std::vector<std::vector<float>> flat(n);
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t count = index.size() / n + (s < index.size() % n ? 1 : 0);
    paths[s].reserve(count);
    flat[s].reserve(count * dim);
  }
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto e = index.embedding(i);
    paths[i % n].push_back(index.paths()[i]);
    flat[i % n].insert(flat[i % n].end(), e.begin(), e.end());
  }
  std::vector<SearchIndex> out;
  out.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    out.emplace_back(index.descriptor(), std::move(paths[s]), std::move(flat[s]),
                     index.created_at());
  }
  return out;
}

std::vector<RankedResult> merge_partials(std::span<const std::vector<RankedResult>> partials,
                                         std::size_t k) {
  std::size_t total = 0;
  for (const auto& p : partials) total += p.size();
  std::unordered_set<std::string_view> seen;
  seen.reserve(total);
  for (const auto& p : partials) {
    for (const auto& r : p) {
      if (!seen.insert(r.path).second) {
        throw DuplicatePathError("path \"" + r.path + "\" returned by more than one shard");
      }
    }
  }
  const std::size_t limit = k == 0 ? total : std::min(k, total);

  // Heap of (partial, position) cursors; the top is the best remaining head.
  struct Cursor {
    std::size_t partial;
    std::size_t pos;
  };
  auto worse = [&](const Cursor& a, const Cursor& b) {
    const auto& ra = partials[a.partial][a.pos];
    const auto& rb = partials[b.partial][b.pos];
    return ranks_before(rb.score, rb.path, ra.score, ra.path);
  };
  std::priority_queue<Cursor, std::vector<Cursor>, decltype(worse)> heap(worse);
  for (std::size_t i = 0; i < partials.size(); ++i) {
    if (!partials[i].empty()) heap.push({i, 0});
  }
  std::vector<RankedResult> out;
  out.reserve(limit);
  while (out.size() < limit && !heap.empty()) {
    const Cursor c = heap.top();
    heap.pop();
    const auto& r = partials[c.partial][c.pos];
    out.push_back({r.path, r.score, out.size() + 1});
    if (c.pos + 1 < partials[c.partial].size()) heap.push({c.partial, c.pos + 1});
  }
  return out;
}

LocalShard::LocalShard(std::shared_ptr<const SearchIndex> index, std::string label)
    : index_(std::move(index)), label_(std::move(label)) {
  if (!index_) throw std::invalid_argument("LocalShard requires an index");
}

std::vector<RankedResult> LocalShard::top_k(const EmbeddingVector& query, std::size_t k) const {
  return search(*index_, query, k);
}

HttpShard::HttpShard(std::string base_url, std::string model_id)
    : base_url_(std::move(base_url)), model_id_(std::move(model_id)) {
  while (base_url_.size() > 1 && base_url_.back() == '/') base_url_.pop_back();
}

std::vector<RankedResult> HttpShard::top_k(const EmbeddingVector& query, std::size_t k) const {
  // Split "http://host:port/prefix" into the origin and an optional path prefix.
  const auto scheme_end = base_url_.find("://");
  const auto path_start =
      base_url_.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  const std::string origin = base_url_.substr(0, path_start);
  const std::string prefix = path_start == std::string::npos ? "" : base_url_.substr(path_start);

  httplib::Client client(origin);
  client.set_connection_timeout(std::chrono::seconds(2));
  client.set_read_timeout(std::chrono::seconds(30));
  json body{{"model_id", model_id_},
            {"k", k},
            {"embedding", std::vector<float>(query.values().begin(), query.values().end())}};
  auto res = client.Post(prefix + "/api/shard/topk", body.dump(), "application/json");
  if (!res) {
    throw Error("shard " + base_url_ + " unreachable: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error("shard " + base_url_ + " answered HTTP " + std::to_string(res->status));
  }
  json doc;
  try {
    doc = json::parse(res->body);
  } catch (const json::parse_error&) {
    throw FormatError("shard " + base_url_ + " returned invalid JSON");
  }
  if (!doc.is_object() || !doc.contains("results")) {
    throw FormatError("shard " + base_url_ + " response lacks results");
  }
  return wire::results_from_json(doc["results"]);
}

std::vector<RankedResult> UnavailableShard::top_k(const EmbeddingVector&, std::size_t) const {
  throw Error(reason_);
}

ShardSet::ShardSet(IndexDescriptor descriptor, std::vector<Member> members)
    : descriptor_(std::move(descriptor)), members_(std::move(members)) {
  if (members_.empty()) throw InvalidShardCount("a shard set needs at least one shard");
}

ShardSet ShardSet::open(const ShardManifest& manifest) {
  std::vector<Member> members;
  for (const auto& entry : manifest.shards) {
    if (is_http_endpoint(entry.endpoint)) {
      members.push_back(
          {entry.shard_id,
           std::make_shared<HttpShard>(entry.endpoint, manifest.descriptor.model_id)});
      continue;
    }
    try {
      auto index = std::make_shared<const SearchIndex>(load_index(entry.endpoint));
      if (index->descriptor() != manifest.descriptor) {
        members.push_back({entry.shard_id, std::make_shared<UnavailableShard>(
                                               entry.endpoint,
                                               "model mismatch: shard has " + index->model_id() +
                                                   "/" + std::to_string(index->dimension()))});
        continue;
      }
      members.push_back({entry.shard_id, std::make_shared<LocalShard>(index, entry.endpoint)});
    } catch (const Error& e) {
      members.push_back(
          {entry.shard_id, std::make_shared<UnavailableShard>(entry.endpoint, e.what())});
    }
  }
  return ShardSet(manifest.descriptor, std::move(members));
}

ShardSet ShardSet::from_indexes(std::vector<SearchIndex> shards) {
  if (shards.empty()) throw InvalidShardCount("a shard set needs at least one shard");
  const auto descriptor = shards.front().descriptor();
  std::vector<Member> members;
  for (std::size_t i = 0; i < shards.size(); ++i) {
    if (shards[i].descriptor() != descriptor) {
      throw InvariantError("shard " + std::to_string(i) + " has a different model or dimension");
    }
    members.push_back(
        {i, std::make_shared<LocalShard>(std::make_shared<const SearchIndex>(std::move(shards[i])),
                                         "memory:" + std::to_string(i))});
  }
  return ShardSet(descriptor, std::move(members));
}

std::size_t ShardSet::known_record_count() const noexcept {
  std::size_t total = 0;
  for (const auto& m : members_) total += m.backend->record_count();
  return total;
}

ScatterResult ShardSet::query(const EmbeddingVector& query, std::size_t k) const {
  if (query.size() != descriptor_.dimension) {
    throw DimensionMismatch(descriptor_.dimension, query.size());
  }
  std::vector<std::vector<RankedResult>> partials(members_.size());
  std::vector<std::string> errors(members_.size());
  std::vector<char> ok(members_.size(), 0);

  auto ask = [&](std::size_t i) {
    try {
      partials[i] = members_[i].backend->top_k(query, k);
      ok[i] = 1;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  };
  if (members_.size() == 1) {
    ask(0);
  } else {
    std::vector<std::future<void>> pending;
    pending.reserve(members_.size());
    for (std::size_t i = 0; i < members_.size(); ++i) {
      pending.push_back(std::async(std::launch::async, ask, i));
    }
    for (auto& f : pending) f.get();
  }

  ScatterResult result;
  for (std::size_t i = 0; i < members_.size(); ++i) {
    if (!ok[i]) result.failed.push_back({members_[i].shard_id, errors[i]});
  }
  std::sort(result.failed.begin(), result.failed.end(),
            [](const ShardFailure& a, const ShardFailure& b) { return a.shard_id < b.shard_id; });
  if (result.failed.size() == members_.size()) {
    std::string msg = "all " + std::to_string(members_.size()) + " shards failed";
    for (const auto& f : result.failed) {
      msg += "; shard " + std::to_string(f.shard_id) + ": " + f.reason;
    }
    throw AllShardsFailed(msg);
  }
  std::vector<std::vector<RankedResult>> healthy;
  for (std::size_t i = 0; i < members_.size(); ++i) {
    if (ok[i]) healthy.push_back(std::move(partials[i]));
  }
  result.results = merge_partials(healthy, k);
  return result;
}

ScatterResult scatter_query(const ShardSet& shards, std::string_view text, std::size_t k,
                            const EmbeddingProvider& provider) {
  const auto& d = provider.descriptor();
  if (d.model_id != shards.descriptor().model_id || d.dimension != shards.descriptor().dimension) {
    throw ProviderError("embedder " + d.model_id + " does not match shard model " +
                        shards.descriptor().model_id);
  }
  return shards.query(provider.embed_text(text), k);
}

}  // namespace clipse
