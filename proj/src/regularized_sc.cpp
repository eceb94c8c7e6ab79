#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "synthdid/errors.hpp"
#include "synthdid/kernels.hpp"
#include "synthdid/weights.hpp"

namespace synthdid {
namespace {

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

// Pre-period data for a subset of periods: each control's centered vector is
// contiguous, plus the centered target and the means needed to recover mu.
struct CenteredProblem {
  std::size_t periods = 0;
  std::size_t controls = 0;
  std::vector<double> columns;  // controls x periods
  std::vector<double> target;
  std::vector<double> column_mean;
  double target_mean = 0.0;

  std::span<const double> column(std::size_t j) const {
    return {columns.data() + j * periods, periods};
  }
};

CenteredProblem make_problem(const PanelDataset& panel, const TreatmentDesign& design,
                             const std::vector<double>& treated_mean,
                             const std::vector<std::size_t>& periods) {
  CenteredProblem p;
  p.periods = periods.size();
  p.controls = design.n_control();
  p.columns.resize(p.controls * p.periods);
  p.column_mean.resize(p.controls);
  for (std::size_t j = 0; j < p.controls; ++j) {
    const std::size_t unit = design.control_units()[j];
    double mean = 0.0;
    for (std::size_t s = 0; s < p.periods; ++s) mean += panel.y(unit, periods[s]);
    mean /= static_cast<double>(p.periods);
    p.column_mean[j] = mean;
    for (std::size_t s = 0; s < p.periods; ++s) {
      p.columns[j * p.periods + s] = panel.y(unit, periods[s]) - mean;
    }
  }
  for (std::size_t s = 0; s < p.periods; ++s) p.target.push_back(treated_mean[periods[s]]);
  p.target_mean = kernels::sum(p.target) / static_cast<double>(p.periods);
  for (double& v : p.target) v -= p.target_mean;
  return p;
}

struct CdResult {
  std::size_t sweeps = 0;
  bool converged = false;
};

// Fenchel duality gap of the elastic-net problem at w, using the dual point
// u = 2 r (scaled into the feasible set when l2 is 0). Bounds how far the
// objective is above its minimum; infinite when there is no penalty.
double duality_gap(const CenteredProblem& p, const ElasticNetPenalty& pen,
                   const std::vector<double>& w, const std::vector<double>& residual) {
  if (pen.l1 <= 0.0 && pen.l2 <= 0.0) return std::numeric_limits<double>::infinity();
  double l1_norm = 0.0, c_max = 0.0, excess = 0.0;
  const double rr = kernels::dot(residual, residual);
  for (std::size_t j = 0; j < p.controls; ++j) {
    l1_norm += std::abs(w[j]);
    const double c = 2.0 * std::abs(kernels::dot(p.column(j), residual));
    c_max = std::max(c_max, c);
    const double over = std::max(c - pen.l1, 0.0);
    excess += over * over;
  }
  const double primal = rr + pen.l1 * l1_norm + pen.l2 * kernels::dot(w, w);
  const double rb = kernels::dot(residual, p.target);
  double dual;
  if (pen.l2 > 0.0) {
    dual = 2.0 * rb - rr - excess / (4.0 * pen.l2);
  } else {
    const double scale = c_max > pen.l1 ? pen.l1 / c_max : 1.0;
    dual = 2.0 * scale * rb - scale * scale * rr;
  }
  return primal - dual;
}

// Cyclic coordinate descent from the warm start in `w`. Stops when no
// coordinate moves the fit by more than the tolerance, or when the duality
// gap certifies the objective to within tolerance * ||centered target||^2;
// the latter matters with many controls and weak penalties, where the
// objective settles long before the weights do.
CdResult coordinate_descent(const CenteredProblem& p, const ElasticNetPenalty& pen,
                            std::vector<double>& w, const RscOptions& options) {
  std::vector<double> col_sq(p.controls);
  for (std::size_t j = 0; j < p.controls; ++j) col_sq[j] = kernels::dot(p.column(j), p.column(j));

  std::vector<double> residual = p.target;
  for (std::size_t j = 0; j < p.controls; ++j) {
    if (w[j] != 0.0) kernels::axpy(-w[j], p.column(j), residual);
  }
  const double target_sq = kernels::dot(p.target, p.target);
  const double threshold = options.tolerance * std::max(std::sqrt(target_sq), 1e-300);
  const double gap_threshold = options.tolerance * std::max(target_sq, 1e-300);

  CdResult out;
  for (std::size_t sweep = 1; sweep <= options.max_sweeps; ++sweep) {
    double max_move = 0.0;
    for (std::size_t j = 0; j < p.controls; ++j) {
      const double denom = col_sq[j] + pen.l2;
      if (denom <= 0.0) {
        w[j] = 0.0;
        continue;
      }
      const double rho = kernels::dot(p.column(j), residual) + col_sq[j] * w[j];
      const double updated = soft_threshold(rho, 0.5 * pen.l1) / denom;
      const double delta = updated - w[j];
      if (delta != 0.0) {
        kernels::axpy(-delta, p.column(j), residual);
        w[j] = updated;
        max_move = std::max(max_move, std::abs(delta) * std::sqrt(denom));
      }
    }
    out.sweeps = sweep;
    if (max_move <= threshold || duality_gap(p, pen, w, residual) <= gap_threshold) {
      out.converged = true;
      break;
    }
  }
  return out;
}

// With a ridge term the problem has a smooth, strongly convex dual in the
// residual r (one entry per period):
//   phi(r) = r'r / 2 - b'r + sum_j (|x_j'r| - l1/2)_+^2 / (2 l2)
// whose minimizer gives w_j = S(x_j'r, l1/2) / l2. Semismooth Newton on phi
// needs a handful of T x T solves, where coordinate descent can take
// thousands of sweeps when controls far outnumber periods.
CdResult dual_newton(const CenteredProblem& p, const ElasticNetPenalty& pen,
                     std::vector<double>& w, const RscOptions& options) {
  const auto n = static_cast<Eigen::Index>(p.periods);
  const auto m = static_cast<Eigen::Index>(p.controls);
  const Eigen::Map<const Eigen::MatrixXd> x(p.columns.data(), n, m);
  const Eigen::Map<const Eigen::VectorXd> b(p.target.data(), n);
  const double half_l1 = 0.5 * pen.l1;

  auto weights_at = [&](const Eigen::VectorXd& r) {
    Eigen::VectorXd c = x.transpose() * r;
    for (Eigen::Index j = 0; j < m; ++j) c(j) = soft_threshold(c(j), half_l1) / pen.l2;
    return c;
  };
  auto phi = [&](const Eigen::VectorXd& r) {
    const Eigen::VectorXd c = x.transpose() * r;
    double excess = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double over = std::max(std::abs(c(j)) - half_l1, 0.0);
      excess += over * over;
    }
    return 0.5 * r.squaredNorm() - b.dot(r) + excess / (2.0 * pen.l2);
  };

  const double b_norm = std::max(b.norm(), 1e-300);
  const double eps = std::numeric_limits<double>::epsilon();
  Eigen::VectorXd r = b;
  Eigen::VectorXd wv = weights_at(r);
  double f = phi(r);
  CdResult out;
  for (std::size_t iter = 1; iter <= options.max_sweeps; ++iter) {
    out.sweeps = iter;
    const Eigen::VectorXd grad = r - b + x * wv;
    if (grad.norm() <= options.tolerance * b_norm) {
      out.converged = true;
      break;
    }
    Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(n, n);
    const Eigen::VectorXd c = x.transpose() * r;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (std::abs(c(j)) > half_l1) jac.selfadjointView<Eigen::Lower>().rankUpdate(x.col(j), 1.0 / pen.l2);
    }
    jac.triangularView<Eigen::StrictlyUpper>() = jac.transpose();
    const Eigen::VectorXd step = jac.llt().solve(-grad);
    const double slope = grad.dot(step);
    double alpha = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving) {
      const Eigen::VectorXd candidate = r + alpha * step;
      const double f_new = phi(candidate);
      const bool flat = std::abs(f_new - f) <= 64.0 * eps * std::max(1.0, std::abs(f));
      const Eigen::VectorXd w_new = weights_at(candidate);
      if (f_new <= f + 1e-4 * alpha * slope ||
          (flat && (candidate - b + x * w_new).norm() < grad.norm())) {
        r = candidate;
        wv = w_new;
        f = f_new;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // Rounding floor: accept when the residual identity holds to working precision.
      out.converged = grad.norm() <= 1e3 * eps * (b_norm + (x * wv).norm());
      break;
    }
  }
  w.assign(wv.data(), wv.data() + m);
  return out;
}

CdResult solve_penalized(const CenteredProblem& p, const ElasticNetPenalty& pen,
                         std::vector<double>& w, const RscOptions& options) {
  if (pen.l2 > 0.0) return dual_newton(p, pen, w, options);
  return coordinate_descent(p, pen, w, options);
}

double recover_intercept(const CenteredProblem& p, const std::vector<double>& w) {
  return p.target_mean - kernels::dot(p.column_mean, w);
}

double control_pre_variance(const PanelDataset& panel, const TreatmentDesign& design) {
  std::vector<double> values;
  for (std::size_t i : design.control_units()) {
    for (std::size_t t = 0; t < design.t_pre(); ++t) values.push_back(panel.y(i, t));
  }
  if (values.size() < 2) return 0.0;
  const double mean = kernels::sum(values) / static_cast<double>(values.size());
  return kernels::sum_sq_dev(values, mean) / static_cast<double>(values.size() - 1);
}

}  // namespace

double regularized_sc_objective(const PanelDataset& panel, const TreatmentDesign& design,
                                double intercept, std::span<const double> weights,
                                const ElasticNetPenalty& penalty) {
  const auto target = treated_means(panel, design);
  double total = 0.0;
  for (std::size_t t = 0; t < design.t_pre(); ++t) {
    double fit = intercept;
    for (std::size_t j = 0; j < design.n_control(); ++j) {
      fit += weights[j] * panel.y(design.control_units()[j], t);
    }
    total += (fit - target[t]) * (fit - target[t]);
  }
  double l1 = 0.0;
  for (double w : weights) l1 += std::abs(w);
  return total + penalty.l1 * l1 + penalty.l2 * kernels::dot(weights, weights);
}

RegularizedScSolution solve_regularized_sc(const PanelDataset& panel,
                                           const TreatmentDesign& design,
                                           const RscPenaltyChoice& choice,
                                           const RscOptions& options) {
  const auto treated_mean = treated_means(panel, design);
  std::vector<std::size_t> pre(design.t_pre());
  for (std::size_t t = 0; t < pre.size(); ++t) pre[t] = t;

  RegularizedScSolution out;
  if (const auto* fixed = std::get_if<ElasticNetPenalty>(&choice)) {
    if (!(fixed->l1 >= 0.0) || !(fixed->l2 >= 0.0)) {
      throw ContractError("elastic-net penalties must be nonnegative");
    }
    out.penalty = *fixed;
  } else {
    if (options.grid_size < 2) throw ContractError("cross-validation grid needs >= 2 values");
    double scale = control_pre_variance(panel, design);
    if (!(scale > 0.0)) scale = 1.0;
    std::vector<double> grid(options.grid_size);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const double exponent =
          -4.0 + 6.0 * static_cast<double>(k) / static_cast<double>(grid.size() - 1);
      grid[k] = scale * std::pow(10.0, exponent);
    }

    std::vector<CenteredProblem> folds;
    for (std::size_t held = 0; held < pre.size(); ++held) {
      std::vector<std::size_t> keep;
      for (std::size_t t : pre) {
        if (t != held) keep.push_back(t);
      }
      folds.push_back(make_problem(panel, design, treated_mean, keep));
    }

    double best = std::numeric_limits<double>::infinity();
    for (double l2 : grid) {
      std::vector<std::vector<double>> warm(folds.size(),
                                            std::vector<double>(design.n_control(), 0.0));
      for (auto l1_it = grid.rbegin(); l1_it != grid.rend(); ++l1_it) {
        const ElasticNetPenalty pen{*l1_it, l2};
        double error = 0.0;
        for (std::size_t f = 0; f < folds.size(); ++f) {
          solve_penalized(folds[f], pen, warm[f], options);
          const double mu = recover_intercept(folds[f], warm[f]);
          double pred = mu;
          for (std::size_t j = 0; j < design.n_control(); ++j) {
            pred += warm[f][j] * panel.y(design.control_units()[j], f);
          }
          error += (pred - treated_mean[f]) * (pred - treated_mean[f]);
        }
        error /= static_cast<double>(folds.size());
        if (error < best) {
          best = error;
          out.penalty = pen;
        }
      }
    }
    out.cross_validated = true;
    out.cv_error = best;
  }

  const CenteredProblem problem = make_problem(panel, design, treated_mean, pre);
  std::vector<double> w(design.n_control(), 0.0);
  const CdResult cd = solve_penalized(problem, out.penalty, w, options);
  if (!cd.converged) {
    const double mu = recover_intercept(problem, w);
    throw ConvergenceError("elastic-net solver stalled after " +
                               std::to_string(cd.sweeps) + " sweeps",
                           w, regularized_sc_objective(panel, design, mu, w, out.penalty));
  }
  out.sweeps = cd.sweeps;
  out.converged = true;
  out.intercept = recover_intercept(problem, w);
  out.weights = std::move(w);
  out.objective = regularized_sc_objective(panel, design, out.intercept, out.weights, out.penalty);
  return out;
}

}  // namespace synthdid
