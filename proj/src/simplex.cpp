#include "synthdid/simplex.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "synthdid/errors.hpp"
#include "synthdid/kernels.hpp"

namespace synthdid {

void project_to_simplex(std::span<double> x) {
  if (x.empty()) return;
  std::vector<double> active(x.begin(), x.end());
  std::vector<double> next;
  next.reserve(active.size());
  double rho = 0.0;
  for (;;) {
    rho = (kernels::sum(active) - 1.0) / static_cast<double>(active.size());
    next.clear();
    for (double v : active) {
      if (v > rho) next.push_back(v);
    }
    if (next.size() == active.size()) break;
    active.swap(next);
  }
  for (double& v : x) v = std::max(v - rho, 0.0);
}

bool is_simplex_point(std::span<const double> x, double tol) noexcept {
  if (x.empty()) return false;
  double total = 0.0;
  for (double v : x) {
    if (!(v >= 0.0 && v <= 1.0 + tol)) return false;
    total += v;
  }
  return std::abs(total - 1.0) <= tol;
}

// ---------------------------------------------------------------------------

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, Layout layout)
    : rows_(rows), cols_(cols), layout_(layout), data_(rows * cols, 0.0) {}

std::span<const double> DenseMatrix::lane(std::size_t k) const noexcept {
  if (layout_ == Layout::RowMajor) return {data_.data() + k * cols_, cols_};
  return {data_.data() + k * rows_, rows_};
}

void DenseMatrix::multiply(std::span<const double> x, std::span<double> out) const {
  if (layout_ == Layout::RowMajor) {
    for (std::size_t r = 0; r < rows_; ++r) out[r] = kernels::dot(lane(r), x);
  } else {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t c = 0; c < cols_; ++c) kernels::axpy(x[c], lane(c), out);
  }
}

void DenseMatrix::multiply_transposed(std::span<const double> r, std::span<double> out) const {
  if (layout_ == Layout::RowMajor) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t k = 0; k < rows_; ++k) kernels::axpy(r[k], lane(k), out);
  } else {
    for (std::size_t c = 0; c < cols_; ++c) out[c] = kernels::dot(lane(c), r);
  }
}

double DenseMatrix::max_eigenvalue_of_gram() const {
  const std::size_t k = layout_ == Layout::RowMajor ? rows_ : cols_;
  if (k == 0) return 0.0;
  Eigen::MatrixXd gram(k, k);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b <= a; ++b) {
      gram(a, b) = gram(b, a) = kernels::dot(lane(a), lane(b));
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  return std::max(0.0, eig.eigenvalues().maxCoeff());
}

// ---------------------------------------------------------------------------

namespace {

double objective_from(std::span<const double> residual, std::span<const double> x, double ridge) {
  return kernels::dot(residual, residual) + ridge * kernels::dot(x, x);
}

}  // namespace

SimplexSolverResult solve_simplex_least_squares(const DenseMatrix& m,
                                                std::span<const double> target, double ridge,
                                                const SimplexSolverOptions& options) {
  const std::size_t n = m.cols();
  const std::size_t rows = m.rows();
  if (n == 0) throw ContractError("simplex program has no variables");
  if (target.size() != rows) throw ContractError("target length differs from matrix rows");

  SimplexSolverResult result;
  std::vector<double> x(n, 1.0 / static_cast<double>(n));

  // Residuals r = M x - target for the current iterate and the momentum point.
  std::vector<double> r_x(rows);
  m.multiply(x, r_x);
  kernels::axpy(-1.0, target, r_x);
  double f_x = objective_from(r_x, x, ridge);
  const double f_start = f_x;

  const double lipschitz = 2.0 * (m.max_eigenvalue_of_gram() + ridge);
  if (n == 1 || lipschitz <= 0.0 || f_start == 0.0) {
    result.x = std::move(x);
    result.objective = f_x;
    result.converged = true;
    return result;
  }
  const double step = 1.0 / lipschitz;
  const double floor = 1e-6 * f_start;

  std::vector<double> y = x, r_y = r_x;
  std::vector<double> grad(n), x_new(n), r_new(rows);
  double momentum = 1.0;

  auto gradient_step = [&](const std::vector<double>& point, const std::vector<double>& residual) {
    m.multiply_transposed(residual, grad);
    // x_new = point - step * (2 M'r + 2 ridge point)
    std::copy(point.begin(), point.end(), x_new.begin());
    kernels::axpby(-2.0 * step, grad, 1.0 - 2.0 * step * ridge, x_new);
    project_to_simplex(x_new);
    m.multiply(x_new, r_new);
    kernels::axpy(-1.0, target, r_new);
    return objective_from(r_new, x_new, ridge);
  };

  for (std::size_t iter = 1; iter <= options.max_iterations; ++iter) {
    double f_new = gradient_step(y, r_y);
    if (f_new > f_x) {
      // Momentum overshot: restart from the last accepted iterate.
      momentum = 1.0;
      f_new = gradient_step(x, r_x);
    }
    const double decrease = f_x - f_new;
    const double next_momentum = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
    const double beta = (momentum - 1.0) / next_momentum;
    momentum = next_momentum;

    // y = x_new + beta (x_new - x), and likewise for the residuals.
    y = x_new;
    kernels::axpby(-beta, x, 1.0 + beta, y);
    r_y = r_new;
    kernels::axpby(-beta, r_x, 1.0 + beta, r_y);
    x.swap(x_new);
    r_x.swap(r_new);
    f_x = f_new;

    if (decrease <= options.tolerance * std::max(f_x, floor)) {
      result.iterations = iter;
      result.converged = true;
      break;
    }
    result.iterations = iter;
  }

  if (!result.converged) {
    throw ConvergenceError("simplex solver did not converge in " +
                               std::to_string(options.max_iterations) + " iterations",
                           x, f_x);
  }
  result.objective = f_x;
  result.x = std::move(x);
  return result;
}

}  // namespace synthdid
