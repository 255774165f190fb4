#include "clipse/bench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "clipse/image.hpp"
#include "clipse/process.hpp"
#include "clipse/search.hpp"

namespace clipse::bench {
namespace fs = std::filesystem;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::uint64_t file_size_or_zero(const fs::path& p) {
  std::error_code ec;
  const auto size = fs::file_size(p, ec);
  return ec ? 0 : static_cast<std::uint64_t>(size);
}

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::optional<Scenario> scenario_from(std::string_view name) {
  for (Scenario s : {Scenario::index, Scenario::query_cold, Scenario::query_warm}) {
    if (scenario_name(s) == name) return s;
  }
  return std::nullopt;
}

}  // namespace

std::string_view scenario_name(Scenario s) noexcept {
  switch (s) {
    case Scenario::index:
      return "index";
    case Scenario::query_cold:
      return "query_cold";
    case Scenario::query_warm:
      return "query_warm";
  }
  return "unknown";
}

Summary summarize(const std::vector<double>& samples) {
  Summary s;
  if (samples.empty()) return s;
  double sum = 0.0;
  for (double x : samples) sum += x;
  s.mean = sum / static_cast<double>(samples.size());
  if (samples.size() > 1) {
    double sq = 0.0;
    for (double x : samples) sq += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(samples.size() - 1));
  }
  return s;
}

void make_corpus(std::size_t n, std::uint64_t seed, const fs::path& out_dir) {
  if (n == 0) throw std::invalid_argument("make_corpus: n must be at least 1");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  constexpr std::uint32_t kSide = 24;
  std::vector<std::uint8_t> rgb(kSide * kSide * 3);
  for (std::size_t i = 0; i < n; ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32)};
    std::mt19937_64 rng(seq);
    for (std::size_t b = 0; b < rgb.size(); b += 8) {
      std::uint64_t word = rng();
      for (std::size_t j = 0; j < 8 && b + j < rgb.size(); ++j) {
        rgb[b + j] = static_cast<std::uint8_t>(word >> (8 * j));
      }
    }
    const auto png = image::encode_png_rgb(kSide, kSide, rgb);
    char name[32];
    std::snprintf(name, sizeof(name), "img_%06zu.png", i);
    write_file_atomic(out_dir / name, png);
  }
}

SearchIndex make_synthetic_index(std::size_t n, std::uint64_t seed,
                                 const EmbeddingProvider& provider) {
  const std::size_t dim = provider.descriptor().dimension;
  std::vector<std::string> paths;
  std::vector<float> flat;
  paths.reserve(n);
  flat.reserve(n * dim);
  char name[48];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(name, sizeof(name), "synthetic/%08zu.png", i);
    paths.emplace_back(name);
    const auto e = provider.embed_text(std::string(name) + "#" + std::to_string(seed));
    flat.insert(flat.end(), e.values().begin(), e.values().end());
  }
  return SearchIndex(IndexDescriptor::from(provider.descriptor()), std::move(paths),
                     std::move(flat), utc_timestamp_now());
}

BenchResult bench_index(const fs::path& corpus_dir, const EmbeddingProvider& provider,
                        std::size_t repetitions) {
  if (repetitions == 0) throw std::invalid_argument("repetitions must be at least 1");
  std::vector<double> samples;
  samples.reserve(repetitions);
  std::size_t n = 0;
  for (std::size_t r = 0; r < repetitions; ++r) {
    const auto start = Clock::now();
    const auto built = build_index(corpus_dir, provider);
    samples.push_back(seconds_since(start));
    n = built.index.size();
  }
  const auto s = summarize(samples);
  BenchResult result;
  result.scenario = Scenario::index;
  result.dataset_label = corpus_dir.filename().string();
  result.n_images = n;
  result.repetitions = repetitions;
  result.mean_seconds = s.mean;
  result.std_seconds = s.std;
  result.per_image_seconds = s.mean / static_cast<double>(n);
  result.mode = "in-process";
  return result;
}

BenchResult bench_query_cold(const fs::path& json_path, const fs::path& binary_path,
                             std::string_view query, const EmbeddingProvider& provider,
                             std::size_t repetitions, const ColdOptions& options) {
  if (repetitions == 0) throw std::invalid_argument("repetitions must be at least 1");
  std::vector<double> samples;
  samples.reserve(repetitions);
  std::size_t n = 0;

  if (options.mode == ColdOptions::Mode::process) {
    const fs::path exe = options.executable.value_or(proc::self_executable());
    std::vector<std::string> argv{exe.string()};
    argv.insert(argv.end(), options.global_flags.begin(), options.global_flags.end());
    argv.insert(argv.end(), {"query", "--index", binary_path.string(), "--mode", "plain", "-k",
                             std::to_string(options.k), "--", std::string(query)});
    for (std::size_t r = 0; r < repetitions; ++r) {
      const auto start = Clock::now();
      const auto outcome = proc::run(argv, {}, false);
      samples.push_back(seconds_since(start));
      if (outcome.exit_code != 0) {
        throw Error("cold query process exited with " + std::to_string(outcome.exit_code));
      }
    }
    n = load_binary(binary_path).size();
  } else {
    for (std::size_t r = 0; r < repetitions; ++r) {
      const auto start = Clock::now();
      {
        const auto index = load_binary(binary_path);
        const auto results = search(index, provider.embed_text(query), options.k);
        n = index.size();
        if (results.empty()) throw Error("cold query produced no results");
      }
      samples.push_back(seconds_since(start));
    }
  }

  const auto s = summarize(samples);
  BenchResult result;
  result.scenario = Scenario::query_cold;
  result.dataset_label = binary_path.stem().string();
  result.n_images = n;
  result.repetitions = repetitions;
  result.mean_seconds = s.mean;
  result.std_seconds = s.std;
  result.index_sizes = IndexSizes{file_size_or_zero(json_path), file_size_or_zero(binary_path)};
  result.mode = options.mode == ColdOptions::Mode::process ? "process" : "in-process";
  return result;
}

BenchResult bench_query_warm(const SearchIndex& index, std::string_view query,
                             const EmbeddingProvider& provider, std::size_t repetitions,
                             std::size_t k) {
  if (repetitions == 0) throw std::invalid_argument("repetitions must be at least 1");
  std::vector<double> samples;
  samples.reserve(repetitions);
  for (std::size_t r = 0; r < repetitions; ++r) {
    const auto start = Clock::now();
    const auto results = search(index, provider.embed_text(query), k);
    samples.push_back(seconds_since(start));
    if (results.empty()) throw Error("warm query produced no results");
  }
  const auto s = summarize(samples);
  BenchResult result;
  result.scenario = Scenario::query_warm;
  result.dataset_label = "memory";
  result.n_images = index.size();
  result.repetitions = repetitions;
  result.mean_seconds = s.mean;
  result.std_seconds = s.std;
  result.mode = "in-process";
  return result;
}

BenchResult bench_query_warm_endpoint(const std::string& base_url, std::string_view query,
                                      std::size_t n_images, std::size_t repetitions) {
  if (repetitions == 0) throw std::invalid_argument("repetitions must be at least 1");
  const std::string path = "/api/search?q=" + httplib::detail::encode_query_param(std::string(query));
  std::vector<double> samples;
  samples.reserve(repetitions);
  for (std::size_t r = 0; r < repetitions; ++r) {
    const auto start = Clock::now();
    {
      httplib::Client client(base_url);
      client.set_keep_alive(false);
      auto res = client.Get(path);
      if (!res) throw Error("endpoint " + base_url + " unreachable: " + httplib::to_string(res.error()));
      if (res->status != 200) {
        throw Error("endpoint " + base_url + " answered HTTP " + std::to_string(res->status));
      }
    }
    samples.push_back(seconds_since(start));
  }
  const auto s = summarize(samples);
  BenchResult result;
  result.scenario = Scenario::query_warm;
  result.dataset_label = base_url;
  result.n_images = n_images;
  result.repetitions = repetitions;
  result.mean_seconds = s.mean;
  result.std_seconds = s.std;
  result.mode = "endpoint";
  return result;
}

std::string emit_report(const std::vector<BenchResult>& results, ReportFormat format) {
  if (format == ReportFormat::json) {
    auto arr = json::array();
    for (const auto& r : results) {
      json item{{"scenario", scenario_name(r.scenario)},
                {"dataset", r.dataset_label},
                {"n_images", r.n_images},
                {"repetitions", r.repetitions},
                {"mean_seconds", r.mean_seconds},
                {"std_seconds", r.std_seconds},
                {"mode", r.mode}};
      item["per_image_seconds"] =
          r.per_image_seconds ? json(*r.per_image_seconds) : json(nullptr);
      if (r.index_sizes) {
        item["index_sizes"] = {{"json_bytes", r.index_sizes->json_bytes},
                               {"binary_bytes", r.index_sizes->binary_bytes}};
      } else {
        item["index_sizes"] = nullptr;
      }
      arr.push_back(std::move(item));
    }
    return arr.dump(2) + "\n";
  }

  const std::vector<std::string> header{"scenario",         "dataset",
                                        "# images",         "repetitions",
                                        "average time [s]", "std time [s]",
                                        "avg time per image [s]", "json index size [MB]",
                                        "binary index size [MB]", "mode"};
  std::vector<std::vector<std::string>> rows{header};
  for (const auto& r : results) {
    rows.push_back({std::string(scenario_name(r.scenario)), r.dataset_label,
                    std::to_string(r.n_images), std::to_string(r.repetitions),
                    fixed3(r.mean_seconds), fixed3(r.std_seconds),
                    r.per_image_seconds ? fixed3(*r.per_image_seconds) : "-",
                    r.index_sizes ? fixed3(r.index_sizes->json_bytes / 1e6) : "-",
                    r.index_sizes ? fixed3(r.index_sizes->binary_bytes / 1e6) : "-",
                    r.mode.empty() ? "-" : r.mode});
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  auto emit_row = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << " | ";
      // Text columns left-aligned, numbers right-aligned.
      const bool left = c < 2 || c + 1 == row.size();
      const std::string pad(width[c] - row[c].size(), ' ');
      out << (left ? row[c] + pad : pad + row[c]);
    }
    out << '\n';
  };
  emit_row(rows.front());
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c) out << "-|-";
    out << std::string(width[c], '-');
  }
  out << '\n';
  for (std::size_t i = 1; i < rows.size(); ++i) emit_row(rows[i]);
  return out.str();
}

std::vector<BenchResult> parse_json_report(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("invalid bench report: ") + e.what());
  }
  if (!doc.is_array()) throw FormatError("bench report must be a JSON array");
  std::vector<BenchResult> out;
  try {
  for (const auto& item : doc) {
    BenchResult r;
    const auto scenario = scenario_from(item.at("scenario").get<std::string>());
    if (!scenario) throw FormatError("unknown scenario in bench report");
    r.scenario = *scenario;
    r.dataset_label = item.at("dataset").get<std::string>();
    r.n_images = item.at("n_images").get<std::size_t>();
    r.repetitions = item.at("repetitions").get<std::size_t>();
    r.mean_seconds = item.at("mean_seconds").get<double>();
    r.std_seconds = item.at("std_seconds").get<double>();
    r.mode = item.value("mode", "");
    if (!item.at("per_image_seconds").is_null()) {
      r.per_image_seconds = item["per_image_seconds"].get<double>();
    }
    if (!item.at("index_sizes").is_null()) {
      r.index_sizes = IndexSizes{item["index_sizes"].at("json_bytes").get<std::uint64_t>(),
                                 item["index_sizes"].at("binary_bytes").get<std::uint64_t>()};
    }
    out.push_back(std::move(r));
  }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed bench report entry: ") + e.what());
  }
  return out;
}

}  // namespace clipse::bench
