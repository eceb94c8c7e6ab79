#include "synthdid/weights.hpp"

#include <cmath>

#include "synthdid/errors.hpp"
#include "synthdid/kernels.hpp"

namespace synthdid {

std::vector<double> treated_means(const PanelDataset& panel, const TreatmentDesign& design) {
  const std::size_t T = panel.num_periods();
  std::vector<double> mean(T, 0.0);
  for (std::size_t i : design.treated_units()) kernels::axpy(1.0, panel.row(i), mean);
  for (double& v : mean) v /= static_cast<double>(design.n_treated());
  return mean;
}

ZetaParams compute_zeta(const PanelDataset& panel, const TreatmentDesign& design) {
  std::vector<double> diffs;
  diffs.reserve(design.n_control() * (design.t_pre() - 1));
  for (std::size_t i : design.control_units()) {
    for (std::size_t t = 0; t + 1 < design.t_pre(); ++t) {
      diffs.push_back(panel.y(i, t + 1) - panel.y(i, t));
    }
  }
  ZetaParams params;
  if (diffs.size() >= 2) {
    const double mean = kernels::sum(diffs) / static_cast<double>(diffs.size());
    params.sigma_hat =
        std::sqrt(kernels::sum_sq_dev(diffs, mean) / static_cast<double>(diffs.size() - 1));
  }
  const double scale =
      std::pow(static_cast<double>(design.n_treated() * design.t_post()), 0.25);
  params.zeta = scale * params.sigma_hat;
  return params;
}

double unit_weight_objective(const PanelDataset& panel, const TreatmentDesign& design,
                             double intercept, std::span<const double> omega, double zeta) {
  const auto target = treated_means(panel, design);
  const auto& controls = design.control_units();
  double total = 0.0;
  for (std::size_t t = 0; t < design.t_pre(); ++t) {
    double fit = intercept;
    for (std::size_t j = 0; j < controls.size(); ++j) fit += omega[j] * panel.y(controls[j], t);
    const double r = fit - target[t];
    total += r * r;
  }
  return total + zeta * zeta * static_cast<double>(design.t_pre()) * kernels::dot(omega, omega);
}

double time_weight_objective(const PanelDataset& panel, const TreatmentDesign& design,
                             double intercept, std::span<const double> lambda, double ridge) {
  double total = 0.0;
  const std::size_t T = panel.num_periods();
  for (std::size_t i : design.control_units()) {
    double post = 0.0;
    for (std::size_t t = design.t_pre(); t < T; ++t) post += panel.y(i, t);
    post /= static_cast<double>(design.t_post());
    double fit = intercept;
    for (std::size_t t = 0; t < design.t_pre(); ++t) fit += lambda[t] * panel.y(i, t);
    const double r = fit - post;
    total += r * r;
  }
  return total +
         ridge * static_cast<double>(design.n_control()) * kernels::dot(lambda, lambda);
}

namespace {

UnitWeightSolution unit_weights_impl(const PanelDataset& panel, const TreatmentDesign& design,
                                     double zeta, const WeightOptions& options, bool intercept) {
  if (!(zeta >= 0.0)) throw ContractError("zeta must be nonnegative");
  const auto& controls = design.control_units();
  const std::size_t t_pre = design.t_pre();
  const std::size_t n_co = controls.size();

  DenseMatrix m(t_pre, n_co, DenseMatrix::Layout::RowMajor);
  for (std::size_t j = 0; j < n_co; ++j) {
    double mean = 0.0;
    if (intercept) {
      for (std::size_t t = 0; t < t_pre; ++t) mean += panel.y(controls[j], t);
      mean /= static_cast<double>(t_pre);
    }
    for (std::size_t t = 0; t < t_pre; ++t) m(t, j) = panel.y(controls[j], t) - mean;
  }
  const auto means = treated_means(panel, design);
  std::vector<double> target(means.begin(), means.begin() + t_pre);
  if (intercept) {
    const double mean = kernels::sum(target) / static_cast<double>(t_pre);
    for (double& v : target) v -= mean;
  }

  const double ridge = zeta * zeta * static_cast<double>(t_pre);
  SimplexSolverResult fit = solve_simplex_least_squares(m, target, ridge, options.solver);

  UnitWeightSolution out;
  out.intercept = intercept;
  out.zeta = zeta;
  out.iterations = fit.iterations;
  out.converged = fit.converged;
  if (intercept) {
    // First-order condition of the unpenalized intercept: mean pre-period gap.
    double gap = 0.0;
    for (std::size_t t = 0; t < t_pre; ++t) {
      double synth = 0.0;
      for (std::size_t j = 0; j < n_co; ++j) synth += fit.x[j] * panel.y(controls[j], t);
      gap += means[t] - synth;
    }
    out.omega0 = gap / static_cast<double>(t_pre);
  }
  out.omega.values = std::move(fit.x);
  out.objective = unit_weight_objective(panel, design, out.omega0, out.omega.values, zeta);
  return out;
}

}  // namespace

UnitWeightSolution solve_unit_weights(const PanelDataset& panel, const TreatmentDesign& design,
                                      double zeta, const WeightOptions& options) {
  return unit_weights_impl(panel, design, zeta, options, true);
}

UnitWeightSolution solve_unit_weights_no_intercept(const PanelDataset& panel,
                                                   const TreatmentDesign& design, double zeta,
                                                   const WeightOptions& options) {
  return unit_weights_impl(panel, design, zeta, options, false);
}

TimeWeightSolution solve_time_weights(const PanelDataset& panel, const TreatmentDesign& design,
                                      const WeightOptions& options) {
  const auto& controls = design.control_units();
  const std::size_t t_pre = design.t_pre();
  const std::size_t n_co = controls.size();
  const std::size_t T = panel.num_periods();

  std::vector<double> pre_values;
  pre_values.reserve(n_co * t_pre);
  for (std::size_t i : controls) {
    for (std::size_t t = 0; t < t_pre; ++t) pre_values.push_back(panel.y(i, t));
  }
  double variance = 0.0;
  if (pre_values.size() >= 2) {
    const double mean = kernels::sum(pre_values) / static_cast<double>(pre_values.size());
    variance = kernels::sum_sq_dev(pre_values, mean) / static_cast<double>(pre_values.size() - 1);
  }
  const double ridge = options.time_ridge_factor * variance;

  DenseMatrix m(n_co, t_pre, DenseMatrix::Layout::ColMajor);
  for (std::size_t t = 0; t < t_pre; ++t) {
    double mean = 0.0;
    for (std::size_t i : controls) mean += panel.y(i, t);
    mean /= static_cast<double>(n_co);
    for (std::size_t j = 0; j < n_co; ++j) m(j, t) = panel.y(controls[j], t) - mean;
  }
  std::vector<double> post_mean(n_co, 0.0);
  for (std::size_t j = 0; j < n_co; ++j) {
    for (std::size_t t = t_pre; t < T; ++t) post_mean[j] += panel.y(controls[j], t);
    post_mean[j] /= static_cast<double>(design.t_post());
  }
  std::vector<double> target = post_mean;
  const double target_mean = kernels::sum(target) / static_cast<double>(n_co);
  for (double& v : target) v -= target_mean;

  SimplexSolverResult fit = solve_simplex_least_squares(
      m, target, ridge * static_cast<double>(n_co), options.solver);

  TimeWeightSolution out;
  out.ridge = ridge;
  out.iterations = fit.iterations;
  out.converged = fit.converged;
  double gap = 0.0;
  for (std::size_t j = 0; j < n_co; ++j) {
    double synth = 0.0;
    for (std::size_t t = 0; t < t_pre; ++t) synth += fit.x[t] * panel.y(controls[j], t);
    gap += post_mean[j] - synth;
  }
  out.lambda0 = gap / static_cast<double>(n_co);
  out.lambda.values = std::move(fit.x);
  out.objective = time_weight_objective(panel, design, out.lambda0, out.lambda.values, ridge);
  return out;
}

}  // namespace synthdid
