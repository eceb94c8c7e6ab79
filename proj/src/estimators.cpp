#include "synthdid/estimators.hpp"

#include <algorithm>
#include <cmath>

#include "synthdid/errors.hpp"
#include "synthdid/kernels.hpp"

namespace synthdid {

std::string_view to_string(UnitScheme scheme) {
  switch (scheme) {
    case UnitScheme::Uniform:
      return "uniform";
    case UnitScheme::Sdid:
      return "sdid";
    case UnitScheme::SdidNoIntercept:
      return "sdid_no_intercept";
    case UnitScheme::Entropy:
      return "entropy";
    case UnitScheme::RegularizedSc:
      return "regularized_sc";
  }
  return "?";
}

std::string_view to_string(TimeScheme scheme) {
  return scheme == TimeScheme::Uniform ? "uniform" : "sdid";
}

std::string to_string(const EstimatorSpec& spec) {
  return std::string(to_string(spec.unit)) + "/" + std::string(to_string(spec.time));
}

EstimatorSpec parse_estimator_spec(std::string_view text) {
  const auto slash = text.find('/');
  if (slash == std::string_view::npos) {
    throw ConfigError("estimator spec '" + std::string(text) + "' must look like unit/time");
  }
  const std::string_view unit = text.substr(0, slash);
  const std::string_view time = text.substr(slash + 1);
  EstimatorSpec spec;
  if (unit == "uniform") {
    spec.unit = UnitScheme::Uniform;
  } else if (unit == "sdid") {
    spec.unit = UnitScheme::Sdid;
  } else if (unit == "sdid_no_intercept") {
    spec.unit = UnitScheme::SdidNoIntercept;
  } else if (unit == "entropy") {
    spec.unit = UnitScheme::Entropy;
  } else if (unit == "regularized_sc") {
    spec.unit = UnitScheme::RegularizedSc;
  } else {
    throw ConfigError("unknown unit weighting scheme '" + std::string(unit) + "'");
  }
  if (time == "uniform") {
    spec.time = TimeScheme::Uniform;
  } else if (time == "sdid") {
    spec.time = TimeScheme::Sdid;
  } else {
    throw ConfigError("unknown time weighting scheme '" + std::string(time) + "'");
  }
  return spec;
}

std::vector<EstimatorSpec> standard_variants() {
  return {{UnitScheme::Uniform, TimeScheme::Uniform},
          {UnitScheme::Uniform, TimeScheme::Sdid},
          {UnitScheme::Sdid, TimeScheme::Uniform},
          {UnitScheme::Sdid, TimeScheme::Sdid}};
}

std::vector<double> unit_regression_weights(const TreatmentDesign& design,
                                            std::span<const double> control_weights) {
  if (control_weights.size() != design.n_control()) {
    throw ContractError("control weight count differs from control units");
  }
  std::vector<double> u(design.treated_mask().size(), 0.0);
  for (std::size_t i : design.treated_units()) u[i] = 1.0 / static_cast<double>(design.n_treated());
  for (std::size_t j = 0; j < design.n_control(); ++j) {
    u[design.control_units()[j]] = control_weights[j];
  }
  return u;
}

std::vector<double> time_regression_weights(const TreatmentDesign& design,
                                            std::span<const double> pre_weights) {
  if (pre_weights.size() != design.t_pre()) {
    throw ContractError("pre-period weight count differs from T_pre");
  }
  std::vector<double> v(design.num_periods(), 1.0 / static_cast<double>(design.t_post()));
  std::copy(pre_weights.begin(), pre_weights.end(), v.begin());
  return v;
}

namespace {

struct CellTotals {
  double treated = 0.0, control = 0.0, pre = 0.0, post = 0.0;
};

CellTotals cell_totals(const TreatmentDesign& design, std::span<const double> u,
                       std::span<const double> v) {
  CellTotals c;
  for (std::size_t i : design.treated_units()) c.treated += u[i];
  for (std::size_t i : design.control_units()) c.control += u[i];
  for (std::size_t t = 0; t < design.t_pre(); ++t) c.pre += v[t];
  for (std::size_t t = design.t_pre(); t < v.size(); ++t) c.post += v[t];
  return c;
}

void check_shapes(const PanelDataset& panel, const TreatmentDesign& design,
                  std::span<const double> u, std::span<const double> v) {
  if (u.size() != panel.num_units() || v.size() != panel.num_periods()) {
    throw ContractError("regression weights must have one entry per unit and per period");
  }
  if (design.treated_mask().size() != panel.num_units() ||
      design.num_periods() != panel.num_periods()) {
    throw ContractError("treatment design does not match the panel");
  }
}

// Removes weighted means: by unit (weights v over periods), then by period
// (weights u over units). Returns the largest correction applied.
double demean_sweep(std::vector<double>& x, std::size_t n, std::size_t T,
                    std::span<const double> u, std::span<const double> v, double u_total,
                    double v_total, bool by_unit) {
  double largest = 0.0;
  if (by_unit) {
    for (std::size_t i = 0; i < n; ++i) {
      std::span<double> row(x.data() + i * T, T);
      const double mean = kernels::dot(v, row) / v_total;
      for (double& value : row) value -= mean;
      if (u[i] > 0.0) largest = std::max(largest, std::abs(mean));
    }
  }
  std::vector<double> period_mean(T, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (u[i] != 0.0) kernels::axpy(u[i], std::span<const double>(x.data() + i * T, T), period_mean);
  }
  for (double& m : period_mean) m /= u_total;
  for (std::size_t i = 0; i < n; ++i) {
    kernels::axpy(-1.0, period_mean, std::span<double>(x.data() + i * T, T));
  }
  for (std::size_t t = 0; t < T; ++t) {
    if (v[t] > 0.0) largest = std::max(largest, std::abs(period_mean[t]));
  }
  return largest;
}

}  // namespace

double weighted_twfe(const PanelDataset& panel, const TreatmentDesign& design,
                     std::span<const double> u, std::span<const double> v,
                     const TwfeOptions& options) {
  check_shapes(panel, design, u, v);
  for (double w : u) {
    if (!(w >= 0.0)) throw ContractError("unit regression weights must be nonnegative");
  }
  for (double w : v) {
    if (!(w >= 0.0)) throw ContractError("period regression weights must be nonnegative");
  }
  const CellTotals cells = cell_totals(design, u, v);
  if (cells.treated <= 0.0 || cells.control <= 0.0 || cells.pre <= 0.0 || cells.post <= 0.0) {
    throw DegenerateWeights(
        "a treated/control x pre/post cell has zero total regression weight");
  }

  const std::size_t n = panel.num_units();
  const std::size_t T = panel.num_periods();
  std::vector<double> y(panel.outcome().begin(), panel.outcome().end());
  std::vector<double> d(n * T, 0.0);
  for (std::size_t i : design.treated_units()) {
    for (std::size_t t = design.t_pre(); t < T; ++t) d[i * T + t] = 1.0;
  }

  const double u_total = cells.treated + cells.control;
  const double v_total = cells.pre + cells.post;
  double scale = 1.0;
  for (double value : y) scale = std::max(scale, std::abs(value));

  for (std::size_t sweep = 0; sweep < options.max_sweeps; ++sweep) {
    const double dy =
        demean_sweep(y, n, T, u, v, u_total, v_total, options.unit_fixed_effects);
    const double dd =
        demean_sweep(d, n, T, u, v, u_total, v_total, options.unit_fixed_effects);
    if (!options.unit_fixed_effects) break;  // a single period pass is exact
    if (sweep > 0 && dy <= options.tolerance * scale && dd <= options.tolerance) break;
  }

  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (u[i] == 0.0) continue;
    const std::span<const double> yi(y.data() + i * T, T);
    const std::span<const double> di(d.data() + i * T, T);
    num += u[i] * kernels::weighted_dot(v, yi, di);
    den += u[i] * kernels::weighted_dot(v, di, di);
  }
  if (!(den > 0.0)) throw DegenerateWeights("treatment indicator has no residual variation");
  return num / den;
}

double closed_form_tau(const PanelDataset& panel, const TreatmentDesign& design,
                       std::span<const double> u, std::span<const double> v,
                       bool unit_fixed_effects, bool normalize_controls) {
  check_shapes(panel, design, u, v);
  const CellTotals cells = cell_totals(design, u, v);
  if (cells.treated <= 0.0 || cells.pre <= 0.0 || cells.post <= 0.0 || cells.control == 0.0) {
    throw DegenerateWeights(
        "a treated/control x pre/post cell has zero total regression weight");
  }
  const double control_norm = normalize_controls ? cells.control : 1.0;
  const std::size_t t_pre = design.t_pre();

  auto post_minus_pre = [&](std::size_t i) {
    const auto row = panel.row(i);
    double post = 0.0, pre = 0.0;
    for (std::size_t t = t_pre; t < row.size(); ++t) post += v[t] * row[t];
    for (std::size_t t = 0; t < t_pre; ++t) pre += v[t] * row[t];
    post /= cells.post;
    pre /= cells.pre;
    return unit_fixed_effects ? post - pre : post;
  };

  double treated = 0.0, control = 0.0;
  for (std::size_t i : design.treated_units()) treated += u[i] * post_minus_pre(i);
  for (std::size_t i : design.control_units()) control += u[i] * post_minus_pre(i);
  return treated / cells.treated - control / control_norm;
}

// ---------------------------------------------------------------------------

EstimateResult estimate(const PanelDataset& panel, const TreatmentDesign& design,
                        const EstimatorSpec& spec, const EstimateOptions& options) {
  EstimateResult result;
  result.spec = spec;
  result.n_treated = design.n_treated();
  result.n_control = design.n_control();
  result.n_obs = panel.num_units() * panel.num_periods();

  const std::size_t n_co = design.n_control();
  const std::size_t t_pre = design.t_pre();

  switch (spec.unit) {
    case UnitScheme::Uniform:
      result.control_weights.assign(n_co, 1.0 / static_cast<double>(n_co));
      break;
    case UnitScheme::Sdid:
    case UnitScheme::SdidNoIntercept: {
      result.zeta = compute_zeta(panel, design);
      const bool intercept = spec.unit == UnitScheme::Sdid;
      result.unit_solution =
          intercept ? solve_unit_weights(panel, design, result.zeta->zeta, options.weights)
                    : solve_unit_weights_no_intercept(panel, design, result.zeta->zeta,
                                                      options.weights);
      result.control_weights = result.unit_solution->omega.values;
      result.unit_fixed_effects = intercept;
      result.diagnostics.converged = result.unit_solution->converged;
      break;
    }
    case UnitScheme::Entropy:
      result.entropy_solution = entropy_balance(panel, design, options.entropy);
      result.control_weights = result.entropy_solution->weights.values;
      break;
    case UnitScheme::RegularizedSc:
      result.rsc_solution = solve_regularized_sc(panel, design, options.rsc_penalty, options.rsc);
      result.control_weights = result.rsc_solution->weights;
      result.diagnostics.converged = result.rsc_solution->converged;
      break;
  }

  if (spec.time == TimeScheme::Sdid) {
    result.time_solution = solve_time_weights(panel, design, options.weights);
    result.pre_weights = result.time_solution->lambda.values;
    result.diagnostics.converged = result.diagnostics.converged && result.time_solution->converged;
    result.diagnostics.notes.push_back("time weights carry a ridge of " +
                                       std::to_string(result.time_solution->ridge) +
                                       " (variance-scaled) to select the most uniform optimum");
  } else {
    result.pre_weights.assign(t_pre, 1.0 / static_cast<double>(t_pre));
  }
  if (result.unit_solution || result.time_solution) {
    result.diagnostics.notes.emplace_back("weight intercepts are unrestricted reals");
  }

  const auto u = unit_regression_weights(design, result.control_weights);
  const auto v = time_regression_weights(design, result.pre_weights);
  const bool signed_weights = spec.unit == UnitScheme::RegularizedSc;
  const double closed =
      closed_form_tau(panel, design, u, v, result.unit_fixed_effects, !signed_weights);
  if (signed_weights) {
    result.tau = closed;
    result.diagnostics.notes.emplace_back(
        "signed elastic-net weights: tau taken from the weighted double difference");
  } else {
    TwfeOptions twfe;
    twfe.unit_fixed_effects = result.unit_fixed_effects;
    result.tau = weighted_twfe(panel, design, u, v, twfe);
    result.diagnostics.closed_form_gap = result.tau - closed;
  }

  const CounterfactualTrend trend = counterfactual_trend(panel, design, result);
  double sq = 0.0;
  for (std::size_t t = 0; t < t_pre; ++t) {
    const double r = trend.treated[t] - trend.counterfactual[t];
    result.diagnostics.pre_fit_residuals.push_back(r);
    sq += r * r;
  }
  result.diagnostics.pre_fit_rmse = std::sqrt(sq / static_cast<double>(t_pre));
  return result;
}

CounterfactualTrend counterfactual_trend(const PanelDataset& panel, const TreatmentDesign& design,
                                         const EstimateResult& result) {
  const std::size_t T = panel.num_periods();
  const std::size_t t_pre = design.t_pre();
  CounterfactualTrend out;
  out.treated = treated_means(panel, design);
  out.counterfactual.assign(T, 0.0);

  const bool has_weights = result.spec.unit != UnitScheme::Uniform &&
                           result.control_weights.size() == design.n_control();
  if (!has_weights) {
    const ArmTrends arms = group_trends(panel, design);
    out.counterfactual = arms.control;
    return out;
  }

  out.synthetic = true;
  for (std::size_t j = 0; j < design.n_control(); ++j) {
    kernels::axpy(result.control_weights[j], panel.row(design.control_units()[j]),
                  out.counterfactual);
  }
  if (result.unit_fixed_effects) {
    std::vector<double> lambda = result.pre_weights;
    if (lambda.size() != t_pre) lambda.assign(t_pre, 1.0 / static_cast<double>(t_pre));
    double total = 0.0, gap = 0.0;
    for (std::size_t t = 0; t < t_pre; ++t) {
      total += lambda[t];
      gap += lambda[t] * (out.treated[t] - out.counterfactual[t]);
    }
    out.level_shift = gap / total;
  }
  for (double& value : out.counterfactual) value += out.level_shift;
  return out;
}

}  // namespace synthdid
