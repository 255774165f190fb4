#include <immintrin.h>

#include "clipse/kernels.hpp"

namespace clipse::kernels::detail {

namespace {

inline double finish(__m256d lo, __m256d hi, const float* a, const float* b, std::size_t body,
                     std::size_t n) {
  // (l0+l4, l1+l5, l2+l6, l3+l7)
  const __m256d s = _mm256_add_pd(lo, hi);
  // ((l0+l4)+(l2+l6), (l1+l5)+(l3+l7))
  const __m128d h = _mm_add_pd(_mm256_castpd256_pd128(s), _mm256_extractf128_pd(s, 1));
  double sum = _mm_cvtsd_f64(h) + _mm_cvtsd_f64(_mm_unpackhi_pd(h, h));
  for (std::size_t i = body; i < n; ++i) {
    sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return sum;
}

}  // namespace

double dot_avx2(const float* a, const float* b, std::size_t n) {
  __m256d lo = _mm256_setzero_pd();
  __m256d hi = _mm256_setzero_pd();
  const std::size_t body = n - n % 8;
  for (std::size_t i = 0; i < body; i += 8) {
    const __m256 va = _mm256_loadu_ps(a + i);
    const __m256 vb = _mm256_loadu_ps(b + i);
    // float*float is exact in double, so fused and unfused forms agree.
    lo = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(va)),
                         _mm256_cvtps_pd(_mm256_castps256_ps128(vb)), lo);
    hi = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(va, 1)),
                         _mm256_cvtps_pd(_mm256_extractf128_ps(vb, 1)), hi);
  }
  return finish(lo, hi, a, b, body, n);
}

void dot_rows_avx2(const float* m, std::size_t rows, std::size_t dim, const float* q,
                   double* out) {
  const std::size_t body = dim - dim % 8;
  std::size_t r = 0;
  // Two rows per pass share the query loads.
  for (; r + 2 <= rows; r += 2) {
    const float* r0 = m + r * dim;
    const float* r1 = r0 + dim;
    __m256d lo0 = _mm256_setzero_pd(), hi0 = _mm256_setzero_pd();
    __m256d lo1 = _mm256_setzero_pd(), hi1 = _mm256_setzero_pd();
    for (std::size_t i = 0; i < body; i += 8) {
      const __m256 vq = _mm256_loadu_ps(q + i);
      const __m256d qlo = _mm256_cvtps_pd(_mm256_castps256_ps128(vq));
      const __m256d qhi = _mm256_cvtps_pd(_mm256_extractf128_ps(vq, 1));
      const __m256 v0 = _mm256_loadu_ps(r0 + i);
      const __m256 v1 = _mm256_loadu_ps(r1 + i);
      lo0 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(v0)), qlo, lo0);
      hi0 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(v0, 1)), qhi, hi0);
      lo1 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(v1)), qlo, lo1);
      hi1 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(v1, 1)), qhi, hi1);
    }
    out[r] = finish(lo0, hi0, r0, q, body, dim);
    out[r + 1] = finish(lo1, hi1, r1, q, body, dim);
  }
  for (; r < rows; ++r) {
    out[r] = dot_avx2(m + r * dim, q, dim);
  }
}

}  // namespace clipse::kernels::detail
