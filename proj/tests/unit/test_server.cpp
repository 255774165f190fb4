#include <gtest/gtest.h>

#include <httplib.h>

#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <future>
#include <json.hpp>
#include <mutex>
#include <random>

#include "clipse/bench.hpp"
#include "clipse/server.hpp"

using namespace clipse;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("clipse-srv-" + std::to_string(rd()) + std::to_string(rd()));
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

// Built corpus on disk with its index saved as JSON + CSIX.
struct Fixture {
  TempDir dir;
  std::shared_ptr<ReferenceEmbedder> provider = std::make_shared<ReferenceEmbedder>(64);
  SearchIndex index;

  Fixture() {
    bench::make_corpus(45, 3, dir.path() / "images");
    index = build_index(dir.path() / "images", *provider).index;
    save_json(index, dir.path() / "index.json");
    save_binary(index, dir.path() / "index.csix");
  }

  ServerConfig config() const {
    ServerConfig c;
    c.index_path = dir.path() / "index.json";
    c.images_root = dir.path() / "images";
    c.bind_address = "127.0.0.1:0";
    return c;
  }
};

json get_json(httplib::Client& client, const std::string& url, int expected_status = 200) {
  auto res = client.Get(url);
  EXPECT_TRUE(res) << url;
  if (!res) return {};
  EXPECT_EQ(res->status, expected_status) << url << ": " << res->body;
  return json::parse(res->body, nullptr, false);
}

std::vector<RankedResult> parse_results(const json& body) {
  std::vector<RankedResult> out;
  for (const auto& r : body["results"])
    out.push_back({r["path"].get<std::string>(), r["score"].get<double>(), r["rank"].get<std::size_t>()});
  return out;
}

std::string encode(const std::string& s) { return httplib::detail::encode_query_param(s); }

}  // namespace

TEST(ServerConfig, Validation) {
  ServerConfig c;
  EXPECT_THROW(validate(c), std::invalid_argument);
  c.index_path = "a";
  EXPECT_NO_THROW(validate(c));
  c.shard_manifest = "b";
  EXPECT_THROW(validate(c), std::invalid_argument);
  c.shard_manifest.reset();
  c.default_page_size = 0;
  EXPECT_THROW(validate(c), std::invalid_argument);
  EXPECT_EQ(parse_bind_address("0.0.0.0:8080"), (std::pair<std::string, int>{"0.0.0.0", 8080}));
  EXPECT_THROW(parse_bind_address("nohost"), std::invalid_argument);
  EXPECT_THROW(parse_bind_address("h:99999"), std::invalid_argument);
}

TEST(Server, HealthIs503UntilLoaded) {
  Fixture f;
  std::mutex m;
  std::condition_variable cv;
  bool release = false;
  auto idx = std::make_shared<const SearchIndex>(f.index);
  Server server(f.config(), f.provider, [&] {
    std::unique_lock lock(m);
    cv.wait(lock, [&] { return release; });
    return ServingState{idx, nullptr};
  });
  const int port = server.start();
  httplib::Client client("127.0.0.1", port);
  auto loading = get_json(client, "/api/health", 503);
  EXPECT_EQ(loading["status"], "loading");
  get_json(client, "/api/search?q=x", 503);
  {
    std::lock_guard lock(m);
    release = true;
  }
  cv.notify_all();
  ASSERT_TRUE(server.wait_ready(std::chrono::seconds(10)));
  auto ok = get_json(client, "/api/health");
  EXPECT_EQ(ok["status"], "ok");
  EXPECT_EQ(ok["records"], 45);
  EXPECT_EQ(ok["model_id"], f.index.model_id());
  EXPECT_EQ(ok["dimension"], 64);
}

TEST(Server, LoadFailureKeepsAnswering503) {
  Fixture f;
  auto cfg = f.config();
  cfg.index_path = f.dir.path() / "missing.json";
  Server server(cfg, f.provider);
  const int port = server.start();
  EXPECT_FALSE(server.wait_ready(std::chrono::seconds(10)));
  EXPECT_FALSE(server.load_error().empty());
  httplib::Client client("127.0.0.1", port);
  EXPECT_EQ(get_json(client, "/api/health", 503)["status"], "error");
}

TEST(Server, SearchContractMatchesInProcess) {
  Fixture f;
  Server server(f.config(), f.provider);
  const int port = server.start();
  ASSERT_TRUE(server.wait_ready(std::chrono::seconds(30)));
  httplib::Client client("127.0.0.1", port);

  const std::string q = "a cat exploring the dark night";
  const auto full = search(f.index, f.provider->embed_text(q));
  auto body = get_json(client, "/api/search?q=" + encode(q));
  EXPECT_EQ(body["query"], q);
  EXPECT_EQ(body["total"], 45);
  EXPECT_EQ(body["page"], 1);
  EXPECT_EQ(body["page_size"], 20);
  EXPECT_GE(body["elapsed_ms"].get<double>(), 0.0);
  EXPECT_EQ(parse_results(body), paginate(full, 1, 20).results);

  body = get_json(client, "/api/search?q=" + encode(q) + "&page=3&page_size=20");
  EXPECT_EQ(parse_results(body), paginate(full, 3, 20).results);
  EXPECT_EQ(body["results"].size(), 5u);

  body = get_json(client, "/api/search?q=" + encode(q) + "&page=9");
  EXPECT_TRUE(body["results"].empty());
  EXPECT_EQ(body["total"], 45);

  body = get_json(client, "/api/search?q=" + encode(q) + "&k=7&page_size=5&page=2");
  EXPECT_EQ(body["total"], 7);
  const auto top7 = search(f.index, f.provider->embed_text(q), 7);
  EXPECT_EQ(parse_results(body), paginate(top7, 2, 5).results);

  body = get_json(client, "/api/search?q=");
  EXPECT_EQ(parse_results(body), paginate(search(f.index, f.provider->embed_text("")), 1, 20).results);
}

TEST(Server, RejectsBadParameters) {
  Fixture f;
  Server server(f.config(), f.provider);
  const int port = server.start();
  ASSERT_TRUE(server.wait_ready(std::chrono::seconds(30)));
  httplib::Client client("127.0.0.1", port);
  for (const char* url : {"/api/search?q=x&page=0", "/api/search?q=x&page=-1", "/api/search?q=x&page=abc",
                          "/api/search?q=x&page_size=0", "/api/search?q=x&k=0", "/api/search?q=x&k=1.5",
                          "/api/search?q=x&page_size=100000", "/api/search?q=x&page=", "/api/search"}) {
    get_json(client, url, 400);
  }
}

TEST(Server, ImagesAreWhitelistedByIndex) {
  Fixture f;
  std::ofstream(f.dir.path() / "images" / "secret.png") << "not indexed";
  std::ofstream(f.dir.path() / "outside.png") << "outside root";
  Server server(f.config(), f.provider);
  const int port = server.start();
  ASSERT_TRUE(server.wait_ready(std::chrono::seconds(30)));
  httplib::Client client("127.0.0.1", port);

  const auto& path = f.index.paths()[0];
  auto res = client.Get("/images/" + path);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "image/png");
  const auto bytes = read_file(f.dir.path() / "images" / path);
  EXPECT_EQ(res->body, std::string(bytes.begin(), bytes.end()));

  for (const char* bad : {"/images/secret.png", "/images/../etc/passwd", "/images/%2e%2e/outside.png",
                          "/images/..%2foutside.png", "/images//etc/passwd", "/images/nope.png"}) {
    auto r = client.Get(bad);
    ASSERT_TRUE(r) << bad;
    EXPECT_EQ(r->status, 404) << bad;
  }
}

TEST(Server, ServesWebAssets) {
  Fixture f;
  TempDir web;
  std::ofstream(web.path() / "index.html") << "<!doctype html><title>t</title>";
  std::ofstream(web.path() / "main.js") << "console.log(1);";
  std::ofstream(web.path() / "style.css") << "body{}";
  auto cfg = f.config();
  cfg.web_root = web.path();
  Server server(cfg, f.provider);
  const int port = server.start();
  httplib::Client client("127.0.0.1", port);
  for (const char* url : {"/", "/main.js", "/style.css"}) {
    auto r = client.Get(url);
    ASSERT_TRUE(r) << url;
    EXPECT_EQ(r->status, 200) << url;
  }
  EXPECT_NE(client.Get("/main.js")->get_header_value("Content-Type").find("javascript"), std::string::npos);

  Server fallback(f.config(), f.provider);
  httplib::Client c2("127.0.0.1", fallback.start());
  auto r = c2.Get("/");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_NE(r->body.find("/api/search"), std::string::npos);
}

TEST(Server, PrefersBinarySibling) {
  Fixture f;
  const auto state = load_serving_state(f.config());
  ASSERT_TRUE(state.index);
  EXPECT_TRUE(state.index->created_at().empty());  // CSIX carries no timestamp
  EXPECT_TRUE(state.index->same_content(f.index));
}

TEST(Server, WarmPathSurvivesIndexDeletion) {
  Fixture f;
  Server server(f.config(), f.provider);
  const int port = server.start();
  ASSERT_TRUE(server.wait_ready(std::chrono::seconds(30)));
  httplib::Client client("127.0.0.1", port);
  const auto before = get_json(client, "/api/search?q=night&page_size=45");
  fs::remove(f.dir.path() / "index.json");
  fs::remove(f.dir.path() / "index.csix");
  const auto after = get_json(client, "/api/search?q=night&page_size=45");
  EXPECT_EQ(before["results"], after["results"]);
  EXPECT_EQ(after["results"].size(), 45u);
}

TEST(Server, ConcurrentIdenticalQueriesAgree) {
  Fixture f;
  Server server(f.config(), f.provider);
  const int port = server.start();
  ASSERT_TRUE(server.wait_ready(std::chrono::seconds(30)));
  std::vector<std::future<json>> futures;
  for (int i = 0; i < 8; ++i) {
    futures.push_back(std::async(std::launch::async, [port] {
      httplib::Client client("127.0.0.1", port);
      json all = json::array();
      for (int j = 0; j < 5; ++j) {
        auto res = client.Get("/api/search?q=same&page_size=45");
        all.push_back(res ? json::parse(res->body)["results"] : json());
      }
      return all;
    }));
  }
  const auto first = futures[0].get();
  ASSERT_FALSE(first[0].is_null());
  for (std::size_t i = 1; i < futures.size(); ++i) {
    for (const auto& r : futures[i].get()) EXPECT_EQ(r, first[0]);
  }
}

TEST(Server, ShardModeReportsDegradedShards) {
  Fixture f;
  const auto parts = split_index(f.index, 3);
  ShardManifest m{f.index.descriptor(), {}};
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto file = f.dir.path() / ("s" + std::to_string(i) + ".csix");
    if (i != 2) save_binary(parts[i], file);
    m.shards.push_back({i, 0, file.string()});
  }
  save_manifest(m, f.dir.path() / "manifest.json");
  auto cfg = f.config();
  cfg.index_path.reset();
  cfg.shard_manifest = f.dir.path() / "manifest.json";
  Server server(cfg, f.provider);
  const int port = server.start();
  ASSERT_TRUE(server.wait_ready(std::chrono::seconds(30)));
  httplib::Client client("127.0.0.1", port);
  const auto body = get_json(client, "/api/search?q=night&k=5");
  EXPECT_EQ(body["degraded"], json::array({2}));
  std::vector<std::vector<RankedResult>> healthy{search(parts[0], f.provider->embed_text("night"), 5),
                                                 search(parts[1], f.provider->embed_text("night"), 5)};
  EXPECT_EQ(parse_results(body), merge_partials(healthy, 5));
  EXPECT_EQ(body["total"], 5);

  // Images of healthy local shards are served.
  auto r = client.Get("/images/" + parts[0].paths()[0]);
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
}

TEST(Server, ShardEndpointValidatesBody) {
  Fixture f;
  Server server(f.config(), f.provider);
  const int port = server.start();
  ASSERT_TRUE(server.wait_ready(std::chrono::seconds(30)));
  httplib::Client client("127.0.0.1", port);
  auto post = [&](const std::string& body) {
    auto r = client.Post("/api/shard/topk", body, "application/json");
    return r ? r->status : -1;
  };
  EXPECT_EQ(post("nope"), 400);
  EXPECT_EQ(post(R"({"k":3,"embedding":[1,2]})"), 400);
  EXPECT_EQ(post(R"({"k":3,"model_id":"other","embedding":[1]})"), 409);
  const auto q = f.provider->embed_text("x");
  json ok{{"k", 3}, {"model_id", f.index.model_id()},
          {"embedding", std::vector<float>(q.values().begin(), q.values().end())}};
  EXPECT_EQ(post(ok.dump()), 200);
}
