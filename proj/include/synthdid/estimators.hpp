#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "synthdid/panel.hpp"
#include "synthdid/weights.hpp"

namespace synthdid {

enum class UnitScheme { Uniform, Sdid, SdidNoIntercept, Entropy, RegularizedSc };
enum class TimeScheme { Uniform, Sdid };

struct EstimatorSpec {
  UnitScheme unit = UnitScheme::Sdid;
  TimeScheme time = TimeScheme::Sdid;

  friend bool operator==(const EstimatorSpec&, const EstimatorSpec&) = default;
};

std::string_view to_string(UnitScheme scheme);
std::string_view to_string(TimeScheme scheme);
/// "unit/time", e.g. "sdid/uniform".
std::string to_string(const EstimatorSpec& spec);
/// Parses "unit/time"; throws ConfigError on unknown names.
EstimatorSpec parse_estimator_spec(std::string_view text);

/// The four classical/synthetic combinations, in the usual reporting order:
/// DiD, time weights only, unit weights only, both.
std::vector<EstimatorSpec> standard_variants();

struct TwfeOptions {
  /// Absorb unit fixed effects. Off for the levels-matching scheme.
  bool unit_fixed_effects = true;
  double tolerance = 1e-12;
  std::size_t max_sweeps = 1000;
};

/// Full per-unit and per-period regression weights for a block design:
/// treated units get 1/N_tr, post periods 1/T_post, controls and pre-periods
/// take the given weights.
std::vector<double> unit_regression_weights(const TreatmentDesign& design,
                                            std::span<const double> control_weights);
std::vector<double> time_regression_weights(const TreatmentDesign& design,
                                            std::span<const double> pre_weights);

/// tau from
///   min_{tau, alpha, beta} sum_it (Y_it - alpha_i - beta_t - W_it tau)^2 u_i v_t
/// solved by weighted within-transformation (alternating weighted demeaning
/// to convergence) and a one-regressor weighted least squares.
/// Throws DegenerateWeights when a treated/control x pre/post cell carries no
/// weight, ContractError on negative weights.
double weighted_twfe(const PanelDataset& panel, const TreatmentDesign& design,
                     std::span<const double> unit_weights, std::span<const double> time_weights,
                     const TwfeOptions& options = {});

/// Block-design double difference equal to weighted_twfe:
///   (treated post - treated pre) - sum_i w_i (Y_i post - Y_i pre)
/// with post/pre averages taken under the period weights. Without unit fixed
/// effects the pre terms drop out. With normalize_controls off the control
/// weights are used as given, which admits signed elastic-net weights.
double closed_form_tau(const PanelDataset& panel, const TreatmentDesign& design,
                       std::span<const double> unit_weights, std::span<const double> time_weights,
                       bool unit_fixed_effects = true, bool normalize_controls = true);

struct EstimateOptions {
  WeightOptions weights{};
  EntropyOptions entropy{};
  RscPenaltyChoice rsc_penalty = CrossValidate{};
  RscOptions rsc{};
};

struct EstimateDiagnostics {
  bool converged = true;
  /// Regression tau minus the closed form (zero up to rounding).
  double closed_form_gap = 0.0;
  /// Treated mean minus synthetic control per pre-period, after the level shift.
  std::vector<double> pre_fit_residuals;
  double pre_fit_rmse = 0.0;
  std::vector<std::string> notes;
};

struct EstimateResult {
  double tau = 0.0;
  EstimatorSpec spec;
  std::optional<ZetaParams> zeta;
  std::optional<UnitWeightSolution> unit_solution;
  std::optional<TimeWeightSolution> time_solution;
  std::optional<EntropyBalanceResult> entropy_solution;
  std::optional<RegularizedScSolution> rsc_solution;
  /// Weights actually used, over control units (design order) and pre-periods.
  std::vector<double> control_weights;
  std::vector<double> pre_weights;
  bool unit_fixed_effects = true;
  std::size_t n_treated = 0;
  std::size_t n_control = 0;
  std::size_t n_obs = 0;
  EstimateDiagnostics diagnostics;
};

/// Solves the weights named by `spec`, then the weighted two-way
/// regression. The elastic-net scheme yields signed weights, so its tau comes
/// from the closed form instead of the regression.
EstimateResult estimate(const PanelDataset& panel, const TreatmentDesign& design,
                        const EstimatorSpec& spec, const EstimateOptions& options = {});

struct CounterfactualTrend {
  std::vector<double> treated;
  std::vector<double> counterfactual;
  /// False when the result carries no unit weights: the second series is then
  /// the plain control-arm mean.
  bool synthetic = false;
  double level_shift = 0.0;
};

/// Treated mean next to the weighted control series shifted so that its
/// time-weighted pre-period gap to the treated mean is zero. The average
/// post-period gap equals tau.
CounterfactualTrend counterfactual_trend(const PanelDataset& panel, const TreatmentDesign& design,
                                         const EstimateResult& result);

}  // namespace synthdid
