#include "clipse/search.hpp"

#include <algorithm>
#include <numeric>

#include "clipse/kernels.hpp"

namespace clipse {

double similarity(std::span<const float> a, std::span<const float> b) {
  return kernels::dot(a, b);
}

double similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  return similarity(a.values(), b.values());
}

std::vector<ScoredPath> score_all(const SearchIndex& index, const EmbeddingVector& query) {
  if (query.size() != index.dimension()) throw DimensionMismatch(index.dimension(), query.size());
  std::vector<double> scores(index.size());
  kernels::dot_rows(index.embeddings().data(), index.size(), index.dimension(), query.data(),
                    scores.data());
  std::vector<ScoredPath> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) out[i] = {index.paths()[i], scores[i]};
  return out;
}

std::vector<RankedResult> top_k(std::span<const ScoredPath> scores, std::size_t k) {
  k = std::clamp<std::size_t>(k, 1, std::max<std::size_t>(scores.size(), 1));
  k = std::min(k, scores.size());
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  auto before = [&](std::size_t a, std::size_t b) {
    return ranks_before(scores[a].score, scores[a].path, scores[b].score, scores[b].path);
  };
  if (k == scores.size()) {
    std::sort(order.begin(), order.end(), before);
  } else {
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      before);
  }
  std::vector<RankedResult> out;
  out.reserve(k);
  for (std::size_t r = 0; r < k; ++r) {
    const auto& s = scores[order[r]];
    out.push_back({std::string(s.path), s.score, r + 1});
  }
  return out;
}

Page paginate(std::span<const RankedResult> results, std::size_t page, std::size_t page_size) {
  page = std::max<std::size_t>(page, 1);
  page_size = std::max<std::size_t>(page_size, 1);
  Page out;
  out.page = page;
  out.page_size = page_size;
  out.total = results.size();
  const std::size_t begin = (page - 1) * page_size;
  // Guard the multiplication against overflow for absurd page numbers.
  if (page - 1 <= results.size() / page_size && begin < results.size()) {
    const std::size_t end = std::min(results.size(), begin + page_size);
    out.results.assign(results.begin() + static_cast<std::ptrdiff_t>(begin),
                       results.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<RankedResult> search(const SearchIndex& index, const EmbeddingVector& query,
                                 std::size_t k) {
  const auto scores = score_all(index, query);
  return top_k(scores, k == 0 ? index.size() : k);
}

}  // namespace clipse
