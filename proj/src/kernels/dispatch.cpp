#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "clipse/error.hpp"
#include "clipse/kernels.hpp"

namespace clipse::kernels {
namespace {

bool cpu_supports(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(CLIPSE_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
#if defined(CLIPSE_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa initial_isa() {
  if (const char* forced = std::getenv("CLIPSE_KERNEL")) {
    const std::string name(forced);
    for (Isa isa : available_isas()) {
      if (isa_name(isa) == name) return isa;
    }
  }
  return available_isas().back();
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::neon:
      return "neon";
  }
  return "unknown";
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out{Isa::scalar};
  for (Isa isa : {Isa::avx2, Isa::neon}) {
    if (cpu_supports(isa)) out.push_back(isa);
  }
  return out;
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!cpu_supports(isa)) {
    throw std::invalid_argument("kernel variant not available: " + std::string(isa_name(isa)));
  }
  active().store(isa, std::memory_order_relaxed);
}

double dot(Isa isa, const float* a, const float* b, std::size_t n) {
  switch (isa) {
#if defined(CLIPSE_HAVE_AVX2)
    case Isa::avx2:
      return detail::dot_avx2(a, b, n);
#endif
#if defined(CLIPSE_HAVE_NEON)
    case Isa::neon:
      return detail::dot_neon(a, b, n);
#endif
    default:
      return detail::dot_scalar(a, b, n);
  }
}

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw DimensionMismatch(a.size(), b.size());
  return dot(active_isa(), a.data(), b.data(), a.size());
}

void dot_rows(Isa isa, const float* matrix, std::size_t rows, std::size_t dim,
              const float* query, double* out) {
  switch (isa) {
#if defined(CLIPSE_HAVE_AVX2)
    case Isa::avx2:
      detail::dot_rows_avx2(matrix, rows, dim, query, out);
      return;
#endif
#if defined(CLIPSE_HAVE_NEON)
    case Isa::neon:
      detail::dot_rows_neon(matrix, rows, dim, query, out);
      return;
#endif
    default:
      detail::dot_rows_scalar(matrix, rows, dim, query, out);
  }
}

void dot_rows(const float* matrix, std::size_t rows, std::size_t dim, const float* query,
              double* out) {
  dot_rows(active_isa(), matrix, rows, dim, query, out);
}

}  // namespace clipse::kernels
