#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

// Dot-product kernels behind the search scorer.
//
// Every variant computes the same fixed reduction so results are bitwise
// identical across instruction sets:
//   - each float product is formed exactly in double precision;
//   - element i of the first floor(n/8)*8 elements is added into lane i % 8;
//   - lanes are reduced as ((l0+l4)+(l2+l6)) + ((l1+l5)+(l3+l7));
//   - the remaining tail elements are then added in index order.
namespace clipse::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa) noexcept;

// Instruction sets compiled in and supported by the running CPU, scalar first.
std::vector<Isa> available_isas();

// Best available variant, unless CLIPSE_KERNEL=scalar|avx2|neon names an
// available one.
Isa active_isa();

// Overrides the runtime choice; throws std::invalid_argument when unavailable.
void set_active_isa(Isa isa);

double dot(std::span<const float> a, std::span<const float> b);
double dot(Isa isa, const float* a, const float* b, std::size_t n);

// out[r] = dot(matrix row r, query) for a row-major rows x dim matrix.
void dot_rows(const float* matrix, std::size_t rows, std::size_t dim, const float* query,
              double* out);
void dot_rows(Isa isa, const float* matrix, std::size_t rows, std::size_t dim,
              const float* query, double* out);

namespace detail {
double dot_scalar(const float* a, const float* b, std::size_t n);
void dot_rows_scalar(const float* m, std::size_t rows, std::size_t dim, const float* q,
                     double* out);
#if defined(CLIPSE_HAVE_AVX2)
double dot_avx2(const float* a, const float* b, std::size_t n);
void dot_rows_avx2(const float* m, std::size_t rows, std::size_t dim, const float* q,
                   double* out);
#endif
#if defined(CLIPSE_HAVE_NEON)
double dot_neon(const float* a, const float* b, std::size_t n);
void dot_rows_neon(const float* m, std::size_t rows, std::size_t dim, const float* q,
                   double* out);
#endif
}  // namespace detail

}  // namespace clipse::kernels
