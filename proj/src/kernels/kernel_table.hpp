#pragma once

#include <cstddef>

namespace synthdid::kernels::detail {

struct KernelTable {
  double (*dot)(const double* x, const double* y, std::size_t n);
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  double (*weighted_dot)(const double* w, const double* x, const double* y, std::size_t n);
  void (*axpby)(double a, const double* x, double b, double* y, std::size_t n);
  double (*sum_sq_dev)(const double* x, double c, std::size_t n);
};

extern const KernelTable scalar_table;
#if defined(SYNTHDID_HAVE_AVX2)
extern const KernelTable avx2_table;
#endif
#if defined(SYNTHDID_HAVE_NEON)
extern const KernelTable neon_table;
#endif

}  // namespace synthdid::kernels::detail
