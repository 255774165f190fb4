#include "clipse/cli.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "clipse/bench.hpp"
#include "clipse/embedding.hpp"
#include "clipse/index.hpp"
#include "clipse/search.hpp"
#include "clipse/server.hpp"
#include "clipse/shard.hpp"

namespace clipse::cli {
namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
  std::string embedder = "reference";
  std::size_t dimension = ReferenceEmbedder::kDefaultDimension;
};

ProviderPtr make_provider(const GlobalOptions& g) {
  return ProviderRegistry::instance().create(g.embedder, {g.dimension});
}

void require_same_model(const IndexDescriptor& index, const EmbeddingProvider& provider) {
  const auto& d = provider.descriptor();
  if (d.model_id != index.model_id || d.dimension != index.dimension) {
    throw ProviderError("index was built with " + index.model_id + " (dimension " +
                        std::to_string(index.dimension) + ") but the embedder is " + d.model_id +
                        " (dimension " + std::to_string(d.dimension) + ")");
  }
}

std::string format_seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", s);
  return buf;
}

// ---------------------------------------------------------------- build

struct BuildArgs {
  std::string image_dir;
  std::string out_json = "index.json";
  std::string out_binary = "index.csix";
  bool no_binary = false;
  std::vector<std::string> extensions;
  bool follow_symlinks = false;
};

int cmd_build(const GlobalOptions& g, const BuildArgs& a, Io& io) {
  const auto provider = make_provider(g);
  BuildOptions options;
  options.follow_symlinks = a.follow_symlinks;
  if (!a.extensions.empty()) {
    options.extensions.clear();
    for (auto e : a.extensions) {
      if (!e.starts_with('.')) e.insert(e.begin(), '.');
      options.extensions.insert(e);
    }
  }
  try {
    auto [index, report] = build_index(a.image_dir, *provider, options);
    for (const auto& s : report.skipped) io.err << "skipped " << s.path << ": " << s.reason << '\n';
    io.out << report.indexed_count << " indexed, " << report.skipped.size() << " skipped in "
           << format_seconds(report.elapsed_seconds) << " s ("
           << format_seconds(report.elapsed_seconds / static_cast<double>(report.indexed_count))
           << " s/image)\n";
    save_json(index, a.out_json);
    io.out << "wrote " << a.out_json << '\n';
    if (!a.no_binary) {
      save_binary(index, a.out_binary);
      io.out << "wrote " << a.out_binary << '\n';
    }
  } catch (const EmptyIndexError& e) {
    io.err << "error: " << e.what() << '\n';
    return kExitEmpty;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- query

struct QueryArgs {
  std::string index_path;
  std::string shards_path;
  std::vector<std::string> words;
  std::size_t k = 10;
  std::string mode = "pretty";
};

void print_plain(std::ostream& out, const std::vector<RankedResult>& results) {
  char score[64];
  for (const auto& r : results) {
    std::snprintf(score, sizeof(score), "%.6f", r.score);
    out << r.rank << '\t' << score << '\t' << r.path << '\n';
  }
}

void print_pretty(std::ostream& out, std::string_view query,
                  const std::vector<RankedResult>& results) {
  constexpr const char* kBold = "\x1b[1m";
  constexpr const char* kDim = "\x1b[2m";
  constexpr const char* kCyan = "\x1b[36m";
  constexpr const char* kGreen = "\x1b[32m";
  constexpr const char* kReset = "\x1b[0m";
  out << kBold << "query: " << kReset << kCyan << query << kReset << '\n';
  out << kBold << "  rank     score  path" << kReset << '\n';
  char line[64];
  for (const auto& r : results) {
    std::snprintf(line, sizeof(line), "%6zu  ", r.rank);
    out << kDim << line << kReset;
    std::snprintf(line, sizeof(line), "%8.4f", r.score);
    out << kGreen << line << kReset << "  " << r.path << '\n';
  }
  if (results.empty()) out << kDim << "  (no results)" << kReset << '\n';
}

int cmd_query(const GlobalOptions& g, const QueryArgs& a, Io& io) {
  const auto provider = make_provider(g);
  std::shared_ptr<const SearchIndex> index;
  std::shared_ptr<const ShardSet> shards;
  if (!a.shards_path.empty()) {
    shards = std::make_shared<const ShardSet>(ShardSet::open(load_manifest(a.shards_path)));
  } else {
    index = std::make_shared<const SearchIndex>(load_index(a.index_path));
    require_same_model(index->descriptor(), *provider);
  }

  const bool pretty = a.mode != "plain" && io.out_is_terminal;
  auto answer = [&](const std::string& text) {
    std::vector<RankedResult> results;
    if (index) {
      results = search(*index, provider->embed_text(text), a.k);
    } else {
      auto scattered = scatter_query(*shards, text, a.k, *provider);
      for (const auto& f : scattered.failed) {
        io.err << "warning: shard " << f.shard_id << " failed: " << f.reason << '\n';
      }
      results = std::move(scattered.results);
    }
    if (pretty) {
      print_pretty(io.out, text, results);
    } else {
      print_plain(io.out, results);
    }
  };

  if (a.mode == "interactive") {
    std::string line;
    bool first = true;
    while (true) {
      if (io.in_is_terminal) io.out << "query> " << std::flush;
      if (!std::getline(io.in, line)) break;
      if (!first) io.out << '\n';
      first = false;
      answer(line);
      io.out << std::flush;
    }
    if (io.in_is_terminal) io.out << '\n';
    return kExitOk;
  }

  std::string text;
  for (std::size_t i = 0; i < a.words.size(); ++i) {
    if (i) text += ' ';
    text += a.words[i];
  }
  answer(text);
  return kExitOk;
}

// ---------------------------------------------------------------- serve

std::atomic<bool> g_stop_requested{false};

extern "C" void on_stop_signal(int) { g_stop_requested.store(true); }

struct ServeArgs {
  std::string index_path;
  std::string shards_path;
  std::string images_root = ".";
  std::string bind = "127.0.0.1:8080";
  std::size_t page_size = kDefaultPageSize;
  std::string web_root;
};

int cmd_serve(const GlobalOptions& g, const ServeArgs& a, Io& io) {
  ServerConfig config;
  if (!a.index_path.empty()) config.index_path = a.index_path;
  if (!a.shards_path.empty()) config.shard_manifest = a.shards_path;
  config.images_root = a.images_root;
  config.bind_address = a.bind;
  if (const char* env = std::getenv("CLIPSE_BIND"); env && *env) config.bind_address = env;
  config.default_page_size = a.page_size;
  if (!a.web_root.empty()) config.web_root = a.web_root;

  const auto provider = make_provider(g);
  Server server(config, provider);
  const int port = server.start();
  const auto host = parse_bind_address(config.bind_address).first;
  io.out << "listening on http://" << host << ':' << port << std::endl;

  g_stop_requested = false;
  std::signal(SIGINT, on_stop_signal);
  std::signal(SIGTERM, on_stop_signal);
  bool reported = false;
  while (!g_stop_requested.load()) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    if (!reported && server.wait_ready(std::chrono::milliseconds(0))) {
      io.out << "index loaded" << std::endl;
      reported = true;
    } else if (!reported && !server.load_error().empty()) {
      io.err << "error: " << server.load_error() << std::endl;
      server.stop();
      return kExitError;
    }
  }
  server.stop();
  return kExitOk;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  std::string scenario = "warm";
  std::vector<std::size_t> sizes;
  std::uint64_t seed = 42;
  std::size_t repetitions = bench::kDefaultRepetitions;
  std::string format = "table";
  std::string cold_mode = "process";
  std::string warm_mode = "in-process";
  std::string query = std::string(bench::kDefaultQuery);
  std::string work_dir;
};

class WorkDir {
 public:
  explicit WorkDir(const std::string& requested) {
    if (!requested.empty()) {
      path_ = requested;
      fs::create_directories(path_);
      return;
    }
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("clipse-bench-" + std::to_string(::getpid()) + "-" + std::to_string(rd()));
    fs::create_directories(path_);
    owned_ = true;
  }
  ~WorkDir() {
    if (owned_) {
      std::error_code ec;
      fs::remove_all(path_, ec);
    }
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  bool owned_ = false;
};

int cmd_bench(const GlobalOptions& g, BenchArgs a, Io& io) {
  const auto provider = make_provider(g);
  if (a.sizes.empty()) a.sizes = {200};
  WorkDir work(a.work_dir);
  std::vector<bench::BenchResult> results;

  for (std::size_t n : a.sizes) {
    const std::string label = "synthetic" + std::to_string(n);
    if (a.scenario == "index") {
      const auto corpus = work.path() / label;
      bench::make_corpus(n, a.seed, corpus);
      results.push_back(bench::bench_index(corpus, *provider, a.repetitions));
    } else if (a.scenario == "cold") {
      const auto index = bench::make_synthetic_index(n, a.seed, *provider);
      const auto json_path = work.path() / (label + ".json");
      const auto binary_path = work.path() / (label + ".csix");
      save_json(index, json_path);
      save_binary(index, binary_path);
      bench::ColdOptions options;
      options.mode = a.cold_mode == "in-process" ? bench::ColdOptions::Mode::in_process
                                                 : bench::ColdOptions::Mode::process;
      options.global_flags = {"--embedder", g.embedder, "--dimension",
                              std::to_string(g.dimension)};
      results.push_back(bench::bench_query_cold(json_path, binary_path, a.query, *provider,
                                                a.repetitions, options));
    } else {
      auto index = std::make_shared<const SearchIndex>(
          bench::make_synthetic_index(n, a.seed, *provider));
      if (a.warm_mode == "endpoint") {
        ServerConfig config;
        config.index_path = work.path() / (label + ".csix");
        config.bind_address = "127.0.0.1:0";
        Server server(config, provider, [index] { return ServingState{index, nullptr}; });
        const int port = server.start();
        server.wait_ready(std::chrono::seconds(60));
        results.push_back(bench::bench_query_warm_endpoint(
            "http://127.0.0.1:" + std::to_string(port), a.query, n, a.repetitions));
      } else {
        results.push_back(bench::bench_query_warm(*index, a.query, *provider, a.repetitions));
      }
    }
    results.back().dataset_label = label;
  }
  io.out << bench::emit_report(results, a.format == "json" ? bench::ReportFormat::json
                                                            : bench::ReportFormat::table);
  return kExitOk;
}

// ---------------------------------------------------------------- convert / shard-split

int cmd_convert(const std::string& in, const std::string& out, Io& io) {
  convert(in, out);
  io.out << "wrote " << out << '\n';
  return kExitOk;
}

struct SplitArgs {
  std::string index_path;
  std::size_t shards = 2;
  std::string out_dir = "shards";
};

int cmd_shard_split(const SplitArgs& a, Io& io) {
  const auto index = load_index(a.index_path);
  const auto parts = split_index(index, a.shards);
  fs::create_directories(a.out_dir);
  ShardManifest manifest;
  manifest.descriptor = index.descriptor();
  for (std::size_t i = 0; i < parts.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "shard-%03zu.csix", i);
    save_binary(parts[i], fs::path(a.out_dir) / name);
    manifest.shards.push_back({i, parts[i].size(), name});
    io.out << "shard " << i << ": " << parts[i].size() << " records -> " << name << '\n';
  }
  const auto manifest_path = fs::path(a.out_dir) / "manifest.json";
  save_manifest(manifest, manifest_path);
  io.out << "wrote " << manifest_path.string() << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, Io io) {
  CLI::App app{"text-to-image search over an embedding index", "clipse"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--embedder", g.embedder, "embedding provider (reference or a registered adapter)");
  app.add_option("--dimension", g.dimension, "embedding dimension of the reference embedder")
      ->check(CLI::PositiveNumber);

  BuildArgs build;
  auto* build_cmd = app.add_subcommand("build", "embed every image in a directory into an index");
  build_cmd->add_option("image_dir", build.image_dir, "directory of images")->required();
  build_cmd->add_option("--out-json", build.out_json, "JSON index output");
  build_cmd->add_option("--out-binary", build.out_binary, "CSIX binary index output");
  build_cmd->add_flag("--no-binary", build.no_binary, "skip the binary index");
  build_cmd->add_option("--extensions", build.extensions, "file suffixes to index")->delimiter(',');
  build_cmd->add_flag("--follow-symlinks", build.follow_symlinks, "descend into symlinks");

  QueryArgs query;
  auto* query_cmd = app.add_subcommand("query", "rank indexed images against a text query");
  auto* q_index = query_cmd->add_option("--index", query.index_path, "JSON or CSIX index");
  auto* q_shards = query_cmd->add_option("--shards", query.shards_path, "shard manifest");
  q_index->excludes(q_shards);
  query_cmd->add_option("-k", query.k, "number of results")->check(CLI::PositiveNumber);
  query_cmd->add_option("--mode", query.mode, "output mode")
      ->check(CLI::IsMember({"pretty", "plain", "interactive"}));
  query_cmd->add_option("text", query.words, "query text");

  std::string convert_in, convert_out;
  auto* convert_cmd = app.add_subcommand("convert", "convert a JSON index to CSIX");
  convert_cmd->add_option("in_json", convert_in)->required();
  convert_cmd->add_option("out_binary", convert_out)->required();

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "serve the search API and web UI");
  auto* s_index = serve_cmd->add_option("--index", serve.index_path, "JSON or CSIX index");
  auto* s_shards = serve_cmd->add_option("--shards", serve.shards_path, "shard manifest");
  s_index->excludes(s_shards);
  serve_cmd->add_option("--images-root", serve.images_root, "directory holding the images");
  serve_cmd->add_option("--bind", serve.bind, "HOST:PORT (CLIPSE_BIND overrides)");
  serve_cmd->add_option("--page-size", serve.page_size, "default page size")
      ->check(CLI::PositiveNumber);
  serve_cmd->add_option("--web-root", serve.web_root, "static web UI directory");

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand("bench", "indexing and query timing over synthetic data");
  bench_cmd->add_option("--scenario", bench_args.scenario)
      ->check(CLI::IsMember({"index", "cold", "warm"}));
  bench_cmd->add_option("--corpus-size", bench_args.sizes, "records per dataset (repeatable)")
      ->check(CLI::PositiveNumber);
  bench_cmd->add_option("--seed", bench_args.seed);
  bench_cmd->add_option("--repetitions", bench_args.repetitions)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--format", bench_args.format)->check(CLI::IsMember({"table", "json"}));
  bench_cmd->add_option("--cold-mode", bench_args.cold_mode)
      ->check(CLI::IsMember({"process", "in-process"}));
  bench_cmd->add_option("--warm-mode", bench_args.warm_mode)
      ->check(CLI::IsMember({"in-process", "endpoint"}));
  bench_cmd->add_option("--query", bench_args.query);
  bench_cmd->add_option("--work-dir", bench_args.work_dir, "keep generated data here");

  SplitArgs split;
  auto* split_cmd = app.add_subcommand("shard-split", "partition an index into shards");
  split_cmd->add_option("--index", split.index_path)->required();
  split_cmd->add_option("--shards", split.shards)->check(CLI::PositiveNumber);
  split_cmd->add_option("--out-dir", split.out_dir);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    io.out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    io.err << "error: " << e.what() << '\n';
    return kExitError;
  }

  try {
    if (*build_cmd) return cmd_build(g, build, io);
    if (*query_cmd) {
      if (query.index_path.empty() && query.shards_path.empty()) {
        io.err << "error: query needs --index or --shards\n";
        return kExitError;
      }
      return cmd_query(g, query, io);
    }
    if (*convert_cmd) return cmd_convert(convert_in, convert_out, io);
    if (*serve_cmd) {
      if (serve.index_path.empty() == serve.shards_path.empty()) {
        io.err << "error: serve needs exactly one of --index and --shards\n";
        return kExitError;
      }
      return cmd_serve(g, serve, io);
    }
    if (*bench_cmd) return cmd_bench(g, bench_args, io);
    if (*split_cmd) return cmd_shard_split(split, io);
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::ios::sync_with_stdio(false);
  return run(args, Io{std::cin, std::cout, std::cerr, static_cast<bool>(::isatty(STDOUT_FILENO)),
                      static_cast<bool>(::isatty(STDIN_FILENO))});
}

}  // namespace clipse::cli
