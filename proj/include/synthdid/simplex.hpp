#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace synthdid {

/// Euclidean projection onto the probability simplex, in place. Uses
/// Michelot's active-set iteration: exact, O(n) work per pass and a handful
/// of passes in practice.
void project_to_simplex(std::span<double> x);

/// True when every entry lies in [0, 1 + tol] and the entries sum to 1 within tol.
bool is_simplex_point(std::span<const double> x, double tol = 1e-10) noexcept;

/// Dense m x n matrix in either layout. Row-major keeps each row contiguous
/// (cheap M x via dots); column-major keeps each column contiguous (cheap M x
/// via axpys). Either way one of M x, M' r is dot-based and the other
/// axpy-based, so both run through the SIMD kernels.
class DenseMatrix {
public:
  enum class Layout { RowMajor, ColMajor };

  DenseMatrix(std::size_t rows, std::size_t cols, Layout layout);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  Layout layout() const noexcept { return layout_; }

  double& operator()(std::size_t r, std::size_t c) noexcept {
    return layout_ == Layout::RowMajor ? data_[r * cols_ + c] : data_[c * rows_ + r];
  }
  double operator()(std::size_t r, std::size_t c) const noexcept {
    return layout_ == Layout::RowMajor ? data_[r * cols_ + c] : data_[c * rows_ + r];
  }

  /// out = M x
  void multiply(std::span<const double> x, std::span<double> out) const;
  /// out = M' r
  void multiply_transposed(std::span<const double> r, std::span<double> out) const;

  /// Largest eigenvalue of M'M, computed from the Gram matrix on the short
  /// (contiguous-vector-count) side.
  double max_eigenvalue_of_gram() const;

private:
  std::span<const double> lane(std::size_t k) const noexcept;

  std::size_t rows_;
  std::size_t cols_;
  Layout layout_;
  std::vector<double> data_;
};

struct SimplexSolverOptions {
  /// Stop when one iteration lowers the objective by less than this fraction.
  double tolerance = 1e-10;
  std::size_t max_iterations = 10000;
};

struct SimplexSolverResult {
  std::vector<double> x;
  double objective = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Minimizes ||M x - target||^2 + ridge * ||x||^2 over the probability
/// simplex with accelerated projected gradient (FISTA, step 1/L, momentum
/// reset whenever the objective would rise, which keeps the iterates
/// monotone). Starts at the uniform point. Convergence is declared when the
/// per-iteration decrease falls below tolerance * max(f, 1e-6 * f_start).
/// Throws ConvergenceError after max_iterations.
SimplexSolverResult solve_simplex_least_squares(const DenseMatrix& m,
                                                std::span<const double> target, double ridge,
                                                const SimplexSolverOptions& options = {});

}  // namespace synthdid
