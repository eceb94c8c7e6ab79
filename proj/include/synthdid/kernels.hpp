#pragma once

// Data-parallel inner loops shared by the weight solvers and the weighted
// regressions. Every routine has a scalar reference implementation plus
// vectorized variants (AVX2+FMA on x86-64, NEON on AArch64) chosen once at
// startup from the CPU feature bits. Vectorized reductions use a different
// summation order than the scalar loop, so results agree to rounding, not
// bit-for-bit, across backends. Within one backend every routine is
// deterministic.

#include <cstddef>
#include <span>
#include <string_view>

namespace synthdid::kernels {

enum class Backend { Scalar, Avx2, Neon };

std::string_view backend_name(Backend backend) noexcept;

/// True when the backend was compiled in and the running CPU supports it.
bool backend_supported(Backend backend) noexcept;

/// Backend picked at startup: the widest supported one unless the
/// SYNTHDID_SIMD environment variable ("scalar", "avx2", "neon") says otherwise.
Backend active_backend() noexcept;

/// Switch backends. Throws ContractError for an unsupported backend. Not meant
/// to be called while other threads are running kernels.
void set_backend(Backend backend);

/// Restores the previous backend on destruction. Used by equivalence tests.
class ScopedBackend {
public:
  explicit ScopedBackend(Backend backend);
  ~ScopedBackend();
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

private:
  Backend previous_;
};

// Callers guarantee matching lengths; only debug builds check.

/// sum_i x[i] * y[i]
double dot(std::span<const double> x, std::span<const double> y) noexcept;

/// y[i] += a * x[i]
void axpy(double a, std::span<const double> x, std::span<double> y) noexcept;

/// sum_i x[i]
double sum(std::span<const double> x) noexcept;

/// sum_i w[i] * x[i] * y[i]
double weighted_dot(std::span<const double> w, std::span<const double> x,
                    std::span<const double> y) noexcept;

/// y[i] = a * x[i] + b * y[i]
void axpby(double a, std::span<const double> x, double b, std::span<double> y) noexcept;

/// sum_i (x[i] - c)^2
double sum_sq_dev(std::span<const double> x, double c) noexcept;

}  // namespace synthdid::kernels
