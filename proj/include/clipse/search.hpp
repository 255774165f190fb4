#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clipse/embedding.hpp"
#include "clipse/index.hpp"

namespace clipse {

struct ScoredPath {
  std::string_view path;
  double score = 0.0;
};

struct RankedResult {
  std::string path;
  double score = 0.0;
  std::size_t rank = 0;  // 1-based

  friend bool operator==(const RankedResult&, const RankedResult&) = default;
};

struct Page {
  std::vector<RankedResult> results;
  std::size_t page = 1;
  std::size_t page_size = 20;
  std::size_t total = 0;
};

inline constexpr std::size_t kDefaultPageSize = 20;

// Result order: score descending, then path ascending.
inline bool ranks_before(double score_a, std::string_view path_a, double score_b,
                         std::string_view path_b) noexcept {
  if (score_a != score_b) return score_a > score_b;
  return path_a < path_b;
}

// Dot product with double accumulation. Throws DimensionMismatch.
double similarity(const EmbeddingVector& a, const EmbeddingVector& b);
double similarity(std::span<const float> a, std::span<const float> b);

// One entry per record in index order. Paths view into `index`.
// Throws DimensionMismatch.
std::vector<ScoredPath> score_all(const SearchIndex& index, const EmbeddingVector& query);

// The min(k, n) best entries, ranked 1..; k == 0 is treated as 1.
std::vector<RankedResult> top_k(std::span<const ScoredPath> scores, std::size_t k);

// Page `page` (1-based) of `results`; pages past the end are empty.
Page paginate(std::span<const RankedResult> results, std::size_t page, std::size_t page_size);

// score_all + top_k; k == 0 means the whole index.
std::vector<RankedResult> search(const SearchIndex& index, const EmbeddingVector& query,
                                 std::size_t k = 0);

}  // namespace clipse
