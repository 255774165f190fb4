#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "clipse/server.hpp"
#include "clipse/shard.hpp"

using namespace clipse;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("clipse-shard-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

SearchIndex random_index(std::mt19937_64& rng, std::size_t n, std::size_t dim,
                         std::string model = "m") {
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<ImageRecord> records;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<float> v(dim);
    for (auto& x : v) x = dist(rng);
    records.push_back({"r" + std::to_string(i) + ".png", EmbeddingVector(std::move(v))});
  }
  return SearchIndex::from_records({std::move(model), dim}, std::move(records), "");
}

EmbeddingVector random_query(std::mt19937_64& rng, std::size_t dim) {
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> v(dim);
  for (auto& x : v) x = dist(rng);
  return EmbeddingVector(std::move(v));
}

std::vector<std::string> paths_of(const std::vector<RankedResult>& results) {
  std::vector<std::string> out;
  for (const auto& r : results) out.push_back(r.path);
  return out;
}

class FailingShard final : public ShardBackend {
 public:
  std::vector<RankedResult> top_k(const EmbeddingVector&, std::size_t) const override {
    throw IoError("connection refused");
  }
  std::string describe() const override { return "down"; }
};

}  // namespace

TEST(Split, IdentityForOneShard) {
  std::mt19937_64 rng(1);
  const auto index = random_index(rng, 10, 4);
  const auto shards = split_index(index, 1);
  ASSERT_EQ(shards.size(), 1u);
  EXPECT_TRUE(shards[0].same_content(index));
}

TEST(Split, RoundRobinSizes) {
  std::mt19937_64 rng(2);
  const auto index = random_index(rng, 10, 4);
  const auto shards = split_index(index, 3);
  ASSERT_EQ(shards.size(), 3u);
  EXPECT_EQ(shards[0].size(), 4u);
  EXPECT_EQ(shards[1].size(), 3u);
  EXPECT_EQ(shards[2].size(), 3u);
  EXPECT_EQ(shards[1].paths()[0], index.paths()[1]);
  EXPECT_EQ(shards[0].paths()[1], index.paths()[3]);
}

TEST(Split, DisjointCoverOverRandomIndexes) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + rng() % 200;
    const auto index = random_index(rng, n, 3);
    const std::size_t shards_n = 1 + rng() % n;
    const auto shards = split_index(index, shards_n);
    std::vector<std::string> all;
    std::size_t lo = SIZE_MAX, hi = 0;
    for (const auto& s : shards) {
      all.insert(all.end(), s.paths().begin(), s.paths().end());
      lo = std::min(lo, s.size());
      hi = std::max(hi, s.size());
      for (std::size_t i = 0; i < s.size(); ++i) {
        const auto j = index.find(s.paths()[i]);
        ASSERT_TRUE(j);
        EXPECT_TRUE(std::equal(s.embedding(i).begin(), s.embedding(i).end(), index.embedding(*j).begin()));
      }
    }
    std::sort(all.begin(), all.end());
    EXPECT_EQ(all, index.paths());
    EXPECT_LE(hi - lo, 1u);
  }
}

TEST(Split, InvalidCounts) {
  std::mt19937_64 rng(4);
  const auto index = random_index(rng, 3, 2);
  EXPECT_THROW(split_index(index, 0), InvalidShardCount);
  EXPECT_THROW(split_index(index, 4), InvalidShardCount);
}

TEST(Merge, Examples) {
  std::vector<std::vector<RankedResult>> partials{{{"a", 0.9, 1}}, {{"b", 0.8, 1}}};
  const auto merged = merge_partials(partials, 2);
  EXPECT_EQ(merged, (std::vector<RankedResult>{{"a", 0.9, 1}, {"b", 0.8, 2}}));

  std::vector<std::vector<RankedResult>> with_empty{{{"a", 0.5, 1}}, {}, {{"c", 0.7, 1}, {"b", 0.1, 2}}};
  EXPECT_EQ(paths_of(merge_partials(with_empty, 10)), (std::vector<std::string>{"c", "a", "b"}));

  std::vector<std::vector<RankedResult>> tie{{{"z", 0.5, 1}}, {{"a", 0.5, 1}}};
  EXPECT_EQ(paths_of(merge_partials(tie, 2)), (std::vector<std::string>{"a", "z"}));

  std::vector<std::vector<RankedResult>> dup{{{"a", 0.5, 1}}, {{"a", 0.5, 1}}};
  EXPECT_THROW(merge_partials(dup, 2), DuplicatePathError);
}

TEST(Merge, IndependentOfPartialOrder) {
  std::mt19937_64 rng(5);
  const auto index = random_index(rng, 120, 8);
  const auto q = random_query(rng, 8);
  auto shards = split_index(index, 4);
  std::vector<std::vector<RankedResult>> partials;
  for (const auto& s : shards) partials.push_back(search(s, q, 10));
  const auto expected = merge_partials(partials, 10);
  std::reverse(partials.begin(), partials.end());
  EXPECT_EQ(merge_partials(partials, 10), expected);
}

TEST(ShardSet, MonolithEquivalence) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t n = 16 + rng() % 400;
    const auto index = random_index(rng, n, 16);
    const auto q = random_query(rng, 16);
    for (std::size_t shards_n : {1u, 2u, 4u, 8u}) {
      const auto set = ShardSet::from_indexes(split_index(index, shards_n));
      EXPECT_EQ(set.known_record_count(), n);
      for (std::size_t k : {std::size_t{1}, std::size_t{5}, n / shards_n}) {
        const auto got = set.query(q, k);
        EXPECT_FALSE(got.degraded());
        EXPECT_EQ(paths_of(got.results), paths_of(search(index, q, k)))
            << "n=" << n << " shards=" << shards_n << " k=" << k;
      }
    }
  }
}

TEST(ShardSet, PartialFailureReportsShard) {
  std::mt19937_64 rng(7);
  const auto index = random_index(rng, 200, 8);
  auto parts = split_index(index, 4);
  std::vector<ShardSet::Member> members;
  for (std::size_t i = 0; i < 4; ++i) {
    if (i == 2) {
      members.push_back({i, std::make_shared<FailingShard>()});
    } else {
      members.push_back({i, std::make_shared<LocalShard>(std::make_shared<SearchIndex>(parts[i]))});
    }
  }
  const ShardSet set(index.descriptor(), std::move(members));
  const auto q = random_query(rng, 8);
  const auto got = set.query(q, 5);
  ASSERT_TRUE(got.degraded());
  ASSERT_EQ(got.failed.size(), 1u);
  EXPECT_EQ(got.failed[0].shard_id, 2u);
  EXPECT_NE(got.failed[0].reason.find("connection refused"), std::string::npos);
  std::vector<std::vector<RankedResult>> healthy{search(parts[0], q, 5), search(parts[1], q, 5),
                                                 search(parts[3], q, 5)};
  EXPECT_EQ(got.results, merge_partials(healthy, 5));
}

TEST(ShardSet, AllFailedThrows) {
  std::vector<ShardSet::Member> members{{0, std::make_shared<FailingShard>()},
                                        {1, std::make_shared<FailingShard>()}};
  const ShardSet set({"m", 2}, std::move(members));
  EXPECT_THROW(set.query(EmbeddingVector({1, 0}), 3), AllShardsFailed);
}

TEST(ScatterQuery, EmbedsOnceAndMatchesMonolith) {
  ReferenceEmbedder e(32);
  std::mt19937_64 rng(8);
  const auto index = random_index(rng, 200, 32, e.descriptor().model_id);
  const auto set = ShardSet::from_indexes(split_index(index, 4));
  const auto got = scatter_query(set, "a cat", 5, e);
  EXPECT_EQ(paths_of(got.results), paths_of(search(index, e.embed_text("a cat"), 5)));

  const auto single = ShardSet::from_indexes(split_index(index, 1));
  EXPECT_EQ(scatter_query(single, "q", 7, e).results, search(index, e.embed_text("q"), 7));

  EXPECT_THROW(scatter_query(set, "x", 5, ReferenceEmbedder(16)), ProviderError);
}

TEST(Manifest, JsonRoundTripAndValidation) {
  ShardManifest m{{"model", 8}, {{0, 0, "shard-000.csix"}, {1, 0, "http://127.0.0.1:9/"}}};
  const auto back = manifest_from_json(manifest_to_json(m));
  EXPECT_EQ(back.descriptor, m.descriptor);
  ASSERT_EQ(back.shards.size(), 2u);
  EXPECT_EQ(back.shards[1].endpoint, "http://127.0.0.1:9/");
  EXPECT_TRUE(is_http_endpoint(back.shards[1].endpoint));
  EXPECT_FALSE(is_http_endpoint(back.shards[0].endpoint));

  EXPECT_THROW(manifest_from_json(R"({"format":"clipse-shards","version":1,"model_id":"m","dimension":2,"shards":[{"id":1,"endpoint":"a"}]})"), FormatError);
  EXPECT_THROW(manifest_from_json(R"({"format":"clipse-shards","version":1,"model_id":"m","dimension":2,"shards":[]})"), FormatError);
  EXPECT_THROW(manifest_from_json(R"({"format":"x"})"), FormatError);
  EXPECT_THROW(manifest_from_json("[]"), FormatError);
}

TEST(Manifest, OpenResolvesRelativePathsAndMarksBadShards) {
  TempDir dir;
  std::mt19937_64 rng(9);
  const auto index = random_index(rng, 30, 4);
  const auto parts = split_index(index, 3);
  ShardManifest m{index.descriptor(), {}};
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const std::string name = "s" + std::to_string(i) + ".csix";
    if (i != 1) save_binary(parts[i], dir.path() / name);
    m.shards.push_back({i, 0, name});
  }
  save_manifest(m, dir.path() / "manifest.json");
  const auto loaded = load_manifest(dir.path() / "manifest.json");
  EXPECT_TRUE(fs::path(loaded.shards[0].endpoint).is_absolute());
  const auto set = ShardSet::open(loaded);
  const auto q = random_query(rng, 4);
  const auto got = set.query(q, 3);
  ASSERT_EQ(got.failed.size(), 1u);
  EXPECT_EQ(got.failed[0].shard_id, 1u);
  std::vector<std::vector<RankedResult>> healthy{search(parts[0], q, 3), search(parts[2], q, 3)};
  EXPECT_EQ(got.results, merge_partials(healthy, 3));
}

TEST(HttpShard, RemoteShardMatchesLocal) {
  auto provider = std::make_shared<ReferenceEmbedder>(16);
  std::mt19937_64 rng(10);
  const auto index = random_index(rng, 60, 16, provider->descriptor().model_id);
  const auto parts = split_index(index, 2);

  std::vector<std::unique_ptr<Server>> servers;
  std::vector<ShardSet::Member> members;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    ServerConfig cfg;
    cfg.index_path = "unused.csix";
    cfg.bind_address = "127.0.0.1:0";
    auto shared = std::make_shared<const SearchIndex>(parts[i]);
    auto server = std::make_unique<Server>(cfg, provider, [shared] { return ServingState{shared, nullptr}; });
    const int port = server->start();
    ASSERT_TRUE(server->wait_ready(std::chrono::seconds(10)));
    members.push_back({i, std::make_shared<HttpShard>("http://127.0.0.1:" + std::to_string(port),
                                                      provider->descriptor().model_id)});
    servers.push_back(std::move(server));
  }
  const ShardSet set(index.descriptor(), std::move(members));
  const auto got = scatter_query(set, "remote", 10, *provider);
  EXPECT_FALSE(got.degraded());
  EXPECT_EQ(paths_of(got.results), paths_of(search(index, provider->embed_text("remote"), 10)));

  // A model mismatch is refused by the shard.
  HttpShard wrong("http://127.0.0.1:" + std::to_string(servers[0]->port()), "other-model");
  EXPECT_THROW(wrong.top_k(provider->embed_text("x"), 3), Error);

  servers[1]->stop();
  const auto degraded = scatter_query(set, "remote", 10, *provider);
  ASSERT_EQ(degraded.failed.size(), 1u);
  EXPECT_EQ(degraded.failed[0].shard_id, 1u);
  EXPECT_EQ(degraded.results, search(parts[0], provider->embed_text("remote"), 10));
}
