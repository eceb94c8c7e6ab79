#pragma once

// Weight programs for the reweighted difference-in-differences estimators:
// simplex-constrained unit and time weights (with and without an
// unpenalized intercept), entropy balancing, and an elastic-net synthetic
// control. All solvers are pure functions of their inputs.

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "synthdid/panel.hpp"
#include "synthdid/simplex.hpp"

namespace synthdid {

/// Nonnegative weights summing to one.
struct SimplexWeights {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t i) const noexcept { return values[i]; }
};

struct ZetaParams {
  /// Sample standard deviation of control-unit first differences within the
  /// pre-period.
  double sigma_hat = 0.0;
  /// (N_tr * T_post)^(1/4) * sigma_hat
  double zeta = 0.0;
};

ZetaParams compute_zeta(const PanelDataset& panel, const TreatmentDesign& design);

struct WeightOptions {
  SimplexSolverOptions solver{};
  /// Ridge on the time weights, as a multiple of the variance of the control
  /// pre-period outcomes. Only there to pick the most uniform optimum when the
  /// unpenalized program has a flat valley.
  double time_ridge_factor = 1e-6;
};

struct UnitWeightSolution {
  double omega0 = 0.0;
  SimplexWeights omega;  ///< over control units, in design order
  /// sum_t (omega0 + sum_i omega_i Y_it - treated_mean_t)^2 + zeta^2 T_pre ||omega||^2
  double objective = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  bool intercept = true;
  double zeta = 0.0;
};

struct TimeWeightSolution {
  double lambda0 = 0.0;
  SimplexWeights lambda;  ///< over pre-periods
  /// sum_i (lambda0 + sum_t lambda_t Y_it - post_mean_i)^2 + ridge N_co ||lambda||^2
  double objective = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  /// Variance-scaled ridge actually applied (zeta_time^2).
  double ridge = 0.0;
};

/// Unit weights matching the treated pre-period trend up to a free level.
UnitWeightSolution solve_unit_weights(const PanelDataset& panel, const TreatmentDesign& design,
                                      double zeta, const WeightOptions& options = {});

/// Same program with the intercept pinned at zero (matching levels).
UnitWeightSolution solve_unit_weights_no_intercept(const PanelDataset& panel,
                                                   const TreatmentDesign& design, double zeta,
                                                   const WeightOptions& options = {});

/// Pre-period weights whose control-unit combination predicts each control's
/// post-period mean up to a free level.
TimeWeightSolution solve_time_weights(const PanelDataset& panel, const TreatmentDesign& design,
                                      const WeightOptions& options = {});

/// Unit objective evaluated directly from the panel; `intercept` is omega0.
double unit_weight_objective(const PanelDataset& panel, const TreatmentDesign& design,
                             double intercept, std::span<const double> omega, double zeta);

/// Time objective evaluated directly from the panel.
double time_weight_objective(const PanelDataset& panel, const TreatmentDesign& design,
                             double intercept, std::span<const double> lambda, double ridge);

// ---------------------------------------------------------------------------

struct EntropyOptions {
  std::size_t max_iterations = 200;
  /// Required max abs imbalance, relative to the spread of the outcomes.
  double tolerance = 1e-12;
};

struct EntropyBalanceResult {
  SimplexWeights weights;  ///< over control units
  std::vector<double> dual;
  std::size_t iterations = 0;
  /// max_t |sum_i w_i Y_it - treated_mean_t|
  double max_imbalance = 0.0;
};

/// Minimum-KL (from uniform) control weights whose weighted pre-period means
/// equal the treated means exactly. Solved by damped Newton on the dual.
/// Throws InfeasibleBalance when the treated mean vector is outside the hull
/// of the control vectors, ConvergenceError when Newton stalls.
EntropyBalanceResult entropy_balance(const PanelDataset& panel, const TreatmentDesign& design,
                                     const EntropyOptions& options = {});

// ---------------------------------------------------------------------------

struct ElasticNetPenalty {
  double l1 = 0.0;
  double l2 = 0.0;
};

/// Select penalties by leave-one-pre-period-out cross-validation.
struct CrossValidate {};

using RscPenaltyChoice = std::variant<ElasticNetPenalty, CrossValidate>;

struct RscOptions {
  /// Iteration cap: Newton steps with a ridge term, coordinate sweeps without.
  std::size_t max_sweeps = 20000;
  /// Relative accuracy. With l2 > 0 the dual residual must satisfy
  /// ||r - (b - X w)|| <= tolerance * ||b||; coordinate descent (l2 = 0) stops
  /// once no coordinate moves the fit by more than tolerance * ||b|| or the
  /// duality gap falls below tolerance * ||b||^2. b is the centered target.
  double tolerance = 1e-12;
  std::size_t grid_size = 20;
};

struct RegularizedScSolution {
  double intercept = 0.0;
  std::vector<double> weights;  ///< over control units, any sign
  ElasticNetPenalty penalty;
  double objective = 0.0;
  std::size_t sweeps = 0;
  bool converged = false;
  bool cross_validated = false;
  /// Mean squared held-out error of the chosen penalty (CV only).
  double cv_error = 0.0;
};

/// Elastic-net synthetic control:
///   min_{mu, w} sum_t (mu + sum_i w_i Y_it - treated_mean_t)^2 + l1 ||w||_1 + l2 ||w||^2
/// over the pre-periods, on intercept-centered data: semismooth Newton on the
/// dual when l2 > 0, cyclic coordinate descent for the pure lasso. With CrossValidate the penalties come from a log grid of grid_size
/// values per penalty between 1e-4 and 1e2 times the variance of the control
/// pre-period outcomes.
RegularizedScSolution solve_regularized_sc(const PanelDataset& panel,
                                           const TreatmentDesign& design,
                                           const RscPenaltyChoice& penalty,
                                           const RscOptions& options = {});

/// Elastic-net objective evaluated directly from the panel.
double regularized_sc_objective(const PanelDataset& panel, const TreatmentDesign& design,
                                double intercept, std::span<const double> weights,
                                const ElasticNetPenalty& penalty);

/// Treated-arm mean per period.
std::vector<double> treated_means(const PanelDataset& panel, const TreatmentDesign& design);

}  // namespace synthdid
