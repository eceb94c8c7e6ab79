#include <atomic>
#include <cassert>
#include <cstdlib>
#include <string>

#include "kernel_table.hpp"
#include "synthdid/errors.hpp"
#include "synthdid/kernels.hpp"

namespace synthdid::kernels {
namespace {

using detail::KernelTable;

bool cpu_has_avx2() noexcept {
#if defined(SYNTHDID_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* table_for(Backend backend) noexcept {
  switch (backend) {
#if defined(SYNTHDID_HAVE_AVX2)
    case Backend::Avx2:
      return &detail::avx2_table;
#endif
#if defined(SYNTHDID_HAVE_NEON)
    case Backend::Neon:
      return &detail::neon_table;
#endif
    default:
      return &detail::scalar_table;
  }
}

Backend widest_supported() noexcept {
  if (backend_supported(Backend::Avx2)) return Backend::Avx2;
  if (backend_supported(Backend::Neon)) return Backend::Neon;
  return Backend::Scalar;
}

Backend initial_backend() noexcept {
  if (const char* env = std::getenv("SYNTHDID_SIMD")) {
    const std::string name(env);
    if (name == "scalar") return Backend::Scalar;
    if (name == "avx2" && backend_supported(Backend::Avx2)) return Backend::Avx2;
    if (name == "neon" && backend_supported(Backend::Neon)) return Backend::Neon;
  }
  return widest_supported();
}

struct State {
  std::atomic<Backend> backend;
  std::atomic<const KernelTable*> table;
  State() {
    const Backend b = initial_backend();
    backend.store(b);
    table.store(table_for(b));
  }
};

State& state() noexcept {
  static State s;
  return s;
}

const KernelTable& active() noexcept {
  return *state().table.load(std::memory_order_relaxed);
}

}  // namespace

std::string_view backend_name(Backend backend) noexcept {
  switch (backend) {
    case Backend::Scalar:
      return "scalar";
    case Backend::Avx2:
      return "avx2";
    case Backend::Neon:
      return "neon";
  }
  return "unknown";
}

bool backend_supported(Backend backend) noexcept {
  switch (backend) {
    case Backend::Scalar:
      return true;
    case Backend::Avx2:
      return cpu_has_avx2();
    case Backend::Neon:
#if defined(SYNTHDID_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Backend active_backend() noexcept { return state().backend.load(); }

void set_backend(Backend backend) {
  if (!backend_supported(backend)) {
    throw ContractError("SIMD backend '" + std::string(backend_name(backend)) +
                        "' is not supported on this machine");
  }
  state().backend.store(backend);
  state().table.store(table_for(backend));
}

ScopedBackend::ScopedBackend(Backend backend) : previous_(active_backend()) {
  set_backend(backend);
}

ScopedBackend::~ScopedBackend() { set_backend(previous_); }

double dot(std::span<const double> x, std::span<const double> y) noexcept {
  assert(x.size() == y.size());
  return active().dot(x.data(), y.data(), x.size());
}

void axpy(double a, std::span<const double> x, std::span<double> y) noexcept {
  assert(x.size() == y.size());
  active().axpy(a, x.data(), y.data(), x.size());
}

double sum(std::span<const double> x) noexcept { return active().sum(x.data(), x.size()); }

double weighted_dot(std::span<const double> w, std::span<const double> x,
                    std::span<const double> y) noexcept {
  assert(w.size() == x.size() && x.size() == y.size());
  return active().weighted_dot(w.data(), x.data(), y.data(), x.size());
}

void axpby(double a, std::span<const double> x, double b, std::span<double> y) noexcept {
  assert(x.size() == y.size());
  active().axpby(a, x.data(), b, y.data(), x.size());
}

double sum_sq_dev(std::span<const double> x, double c) noexcept {
  return active().sum_sq_dev(x.data(), c, x.size());
}

}  // namespace synthdid::kernels
