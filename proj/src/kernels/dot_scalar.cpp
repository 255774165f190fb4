#include "clipse/kernels.hpp"

namespace clipse::kernels::detail {

double dot_scalar(const float* a, const float* b, std::size_t n) {
  double lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  const std::size_t body = n - n % 8;
  for (std::size_t i = 0; i < body; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) {
      lane[l] += static_cast<double>(a[i + l]) * static_cast<double>(b[i + l]);
    }
  }
  double sum = ((lane[0] + lane[4]) + (lane[2] + lane[6])) +
               ((lane[1] + lane[5]) + (lane[3] + lane[7]));
  for (std::size_t i = body; i < n; ++i) {
    sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return sum;
}

void dot_rows_scalar(const float* m, std::size_t rows, std::size_t dim, const float* q,
                     double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    out[r] = dot_scalar(m + r * dim, q, dim);
  }
}

}  // namespace clipse::kernels::detail
