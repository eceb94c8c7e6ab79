#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "synthdid/errors.hpp"
#include "synthdid/weights.hpp"

namespace synthdid {
namespace {

// log((1/N) sum_i exp(D_i theta)) and the normalized weights p.
double log_mean_exp(const Eigen::MatrixXd& d, const Eigen::VectorXd& theta, Eigen::VectorXd& p) {
  const Eigen::VectorXd z = d * theta;
  const double shift = z.maxCoeff();
  p = (z.array() - shift).exp().matrix();
  const double total = p.sum();
  p /= total;
  return shift + std::log(total / static_cast<double>(d.rows()));
}

}  // namespace

// The dual objective h(theta) = log((1/N) sum exp(theta'd_i)) has minimum
// -KL(w*, uniform) >= -log N whenever the moments are attainable, and is
// unbounded below otherwise. An iterate with h < -log N is therefore a
// certificate of infeasibility.
EntropyBalanceResult entropy_balance(const PanelDataset& panel, const TreatmentDesign& design,
                                     const EntropyOptions& options) {
  const auto& controls = design.control_units();
  const std::size_t n = controls.size();
  const std::size_t k = design.t_pre();
  const auto target = treated_means(panel, design);

  // Moment deviations, scaled per period for conditioning.
  Eigen::MatrixXd d(n, k);
  Eigen::VectorXd scale(k);
  double magnitude = 1.0;
  for (std::size_t t = 0; t < k; ++t) {
    double lo = panel.y(controls[0], t), hi = lo;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = panel.y(controls[j], t);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      d(j, t) = v - target[t];
      magnitude = std::max(magnitude, std::abs(v));
    }
    scale(t) = hi > lo ? hi - lo : 1.0;
    d.col(t) /= scale(t);
  }
  const double tolerance = options.tolerance * magnitude;
  const double floor = -std::log(static_cast<double>(n));

  auto imbalance = [&](const Eigen::VectorXd& p) {
    const Eigen::VectorXd g = d.transpose() * p;
    return (g.array() * scale.array()).abs().maxCoeff();
  };

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd p;
  double h = log_mean_exp(d, theta, p);

  EntropyBalanceResult out;
  for (std::size_t iter = 0; iter <= options.max_iterations; ++iter) {
    out.iterations = iter;
    const double err = imbalance(p);
    if (err <= tolerance) {
      out.weights.values.assign(p.data(), p.data() + n);
      out.dual.assign(theta.data(), theta.data() + k);
      out.max_imbalance = err;
      return out;
    }
    if (iter == options.max_iterations) break;

    const Eigen::VectorXd grad = d.transpose() * p;
    Eigen::MatrixXd hess = d.transpose() * p.asDiagonal() * d - grad * grad.transpose();
    // Repeated or collinear moments make the Hessian singular; the minimum-norm
    // step leaves theta alone along directions that do not move the weights.
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(hess);
    cod.setThreshold(1e-12);
    Eigen::VectorXd step = cod.solve(-grad);
    double slope = grad.dot(step);
    if (!step.allFinite() || slope >= 0.0) {
      step = -grad;
      slope = -grad.squaredNorm();
    }

    double alpha = 1.0;
    Eigen::VectorXd p_new;
    double h_new = h;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving) {
      const Eigen::VectorXd candidate = theta + alpha * step;
      h_new = log_mean_exp(d, candidate, p_new);
      // Near the optimum h is flat to rounding; then progress is judged by the
      // gradient instead.
      const bool flat = std::abs(h_new - h) <= 64.0 * std::numeric_limits<double>::epsilon() *
                                                   std::max(1.0, std::abs(h));
      if (h_new <= h + 1e-4 * alpha * slope ||
          (flat && (d.transpose() * p_new).norm() < grad.norm())) {
        theta = candidate;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // No further progress in floating point; accept whatever balance we have
      // if it is close, otherwise report the stall below.
      break;
    }
    h = h_new;
    p = p_new;
    if (h < floor - 1e-9) {
      throw InfeasibleBalance(
          "treated pre-period means lie outside the convex hull of the control units");
    }
  }

  if (theta.norm() > 1e6) {
    throw InfeasibleBalance("entropy balancing dual diverged; moment conditions are not attainable");
  }
  std::vector<double> last(p.data(), p.data() + n);
  throw ConvergenceError("entropy balancing Newton iteration did not converge", std::move(last), h);
}

}  // namespace synthdid
