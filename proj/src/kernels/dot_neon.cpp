#include <arm_neon.h>

#include "clipse/kernels.hpp"

namespace clipse::kernels::detail {

double dot_neon(const float* a, const float* b, std::size_t n) {
  // acc0 = (l0,l1) acc1 = (l2,l3) acc2 = (l4,l5) acc3 = (l6,l7)
  float64x2_t acc0 = vdupq_n_f64(0.0), acc1 = vdupq_n_f64(0.0);
  float64x2_t acc2 = vdupq_n_f64(0.0), acc3 = vdupq_n_f64(0.0);
  const std::size_t body = n - n % 8;
  for (std::size_t i = 0; i < body; i += 8) {
    const float32x4_t a0 = vld1q_f32(a + i), a1 = vld1q_f32(a + i + 4);
    const float32x4_t b0 = vld1q_f32(b + i), b1 = vld1q_f32(b + i + 4);
    acc0 = vfmaq_f64(acc0, vcvt_f64_f32(vget_low_f32(a0)), vcvt_f64_f32(vget_low_f32(b0)));
    acc1 = vfmaq_f64(acc1, vcvt_high_f64_f32(a0), vcvt_high_f64_f32(b0));
    acc2 = vfmaq_f64(acc2, vcvt_f64_f32(vget_low_f32(a1)), vcvt_f64_f32(vget_low_f32(b1)));
    acc3 = vfmaq_f64(acc3, vcvt_high_f64_f32(a1), vcvt_high_f64_f32(b1));
  }
  // (l0+l4, l1+l5) + (l2+l6, l3+l7)
  const float64x2_t h = vaddq_f64(vaddq_f64(acc0, acc2), vaddq_f64(acc1, acc3));
  double sum = vgetq_lane_f64(h, 0) + vgetq_lane_f64(h, 1);
  for (std::size_t i = body; i < n; ++i) {
    sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return sum;
}

void dot_rows_neon(const float* m, std::size_t rows, std::size_t dim, const float* q,
                   double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    out[r] = dot_neon(m + r * dim, q, dim);
  }
}

}  // namespace clipse::kernels::detail
