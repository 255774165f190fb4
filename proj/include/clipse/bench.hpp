#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "clipse/embedding.hpp"
#include "clipse/index.hpp"

namespace clipse::bench {

inline constexpr std::size_t kDefaultRepetitions = 32;
inline constexpr std::string_view kDefaultQuery = "a cat exploring the dark night";

enum class Scenario { index, query_cold, query_warm };

std::string_view scenario_name(Scenario s) noexcept;

struct IndexSizes {
  std::uint64_t json_bytes = 0;
  std::uint64_t binary_bytes = 0;
};

struct BenchResult {
  Scenario scenario = Scenario::index;
  std::string dataset_label;
  std::size_t n_images = 0;
  std::size_t repetitions = 0;
  double mean_seconds = 0.0;
  double std_seconds = 0.0;
  std::optional<double> per_image_seconds;  // set for Scenario::index
  std::optional<IndexSizes> index_sizes;
  std::string mode;  // how the timing was taken, e.g. "process" or "endpoint"
};

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single sample
};
Summary summarize(const std::vector<double>& samples);

// Writes n deterministic PNGs (img_000000.png, ...) into out_dir. Throws
// std::invalid_argument for n == 0 and IoError on write failure.
void make_corpus(std::size_t n, std::uint64_t seed, const std::filesystem::path& out_dir);

// Index with n records whose embeddings come from the reference embedder
// applied to synthetic names; used where images are irrelevant.
SearchIndex make_synthetic_index(std::size_t n, std::uint64_t seed,
                                 const EmbeddingProvider& provider);

// Times build_index alone (no persistence), `repetitions` times.
BenchResult bench_index(const std::filesystem::path& corpus_dir, const EmbeddingProvider& provider,
                        std::size_t repetitions = kDefaultRepetitions);

struct ColdOptions {
  enum class Mode { process, in_process };
  Mode mode = Mode::process;
  // Executable for process mode; defaults to the running binary.
  std::optional<std::filesystem::path> executable;
  // Extra flags passed before the subcommand, e.g. {"--dimension", "512"}.
  std::vector<std::string> global_flags;
  std::size_t k = 10;
};

// Each repetition loads the index, embeds the query, scores and ranks, in a
// fresh process (the default) or with freshly allocated in-process state.
// Reports the sizes of both files.
BenchResult bench_query_cold(const std::filesystem::path& json_path,
                             const std::filesystem::path& binary_path, std::string_view query,
                             const EmbeddingProvider& provider,
                             std::size_t repetitions = kDefaultRepetitions,
                             const ColdOptions& options = {});

// Index resident before timing starts; each repetition embeds, scores and
// ranks the query.
BenchResult bench_query_warm(const SearchIndex& index, std::string_view query,
                             const EmbeddingProvider& provider,
                             std::size_t repetitions = kDefaultRepetitions, std::size_t k = 10);

// Each repetition is a full HTTP round trip on a new connection to
// GET {base_url}/api/search.
BenchResult bench_query_warm_endpoint(const std::string& base_url, std::string_view query,
                                      std::size_t n_images,
                                      std::size_t repetitions = kDefaultRepetitions);

enum class ReportFormat { table, json };

// Table values are rounded to 3 decimals; json keeps full precision.
std::string emit_report(const std::vector<BenchResult>& results, ReportFormat format);
std::vector<BenchResult> parse_json_report(std::string_view text);

}  // namespace clipse::bench
