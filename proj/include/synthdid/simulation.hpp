#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "synthdid/csv.hpp"

namespace synthdid {

enum class TreatmentStatus { Untreated, Treated, Unknown };

struct CountyVotes {
  std::string unit;
  std::string state;
  double dem_votes = 0.0;
  double rep_votes = 0.0;
  double vap = 0.0;  ///< voting-age population
  TreatmentStatus treated = TreatmentStatus::Untreated;
  double lag_dem_share = 0.0;  ///< previous two-party Democratic share in [0, 1]
};

/// Collects non-fatal notices (clamped shares, fallbacks, noisy denominators).
using Warnings = std::vector<std::string>;

/// Takes the estimated effects out of a treated county's vote totals in share
/// space: turnout t = (D+R)/vap drops by tau_turnout/100 and two-party share
/// d = D/(D+R) by tau_dvs/100 (both in percentage points), shares are clamped
/// to [0, 1], and the votes are rebuilt as D' = vap t' d', R' = vap t' (1-d').
/// Zero effects return the county unchanged. Throws ContractError for a county
/// not marked treated and DataError when vap is 0.
CountyVotes remove_effects(const CountyVotes& county, double tau_turnout, double tau_dvs,
                           Warnings* warnings = nullptr);

/// P(treated | lag_dem_share) used to impute unknown assignments.
struct TreatmentModel {
  double intercept = 0.0;
  double slope = 0.0;
  double intercept_se = 0.0;
  double slope_se = 0.0;
  /// Linear probability model used because the logistic fit separated.
  bool linear_fallback = false;
  std::size_t n_fit = 0;

  /// Fitted probability clamped to [0.001, 0.999].
  double probability(double lag_dem_share) const;
};

/// Logistic regression of treatment on lag_dem_share over counties with
/// known status (Newton/IRLS). Complete or quasi-complete separation switches
/// to the least-squares linear probability fit and records a warning.
TreatmentModel fit_treatment_model(std::span<const CountyVotes> counties,
                                   Warnings* warnings = nullptr);

/// One Bernoulli draw per county with unknown status (in input order), from
/// Stream(seed, draw). Counties with known status are skipped.
std::vector<bool> impute_treatment(std::span<const CountyVotes> counties,
                                   const TreatmentModel& model, std::uint64_t seed,
                                   std::size_t draw);

struct SimulationOptions {
  std::size_t draws = 1000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  /// Keep the draws x states margin matrix in the result.
  bool keep_draws = false;
};

struct StateSummary {
  std::string state;
  double observed_margin = 0.0;  ///< 100 (D - R) / (D + R)
  double mean_margin = 0.0;
  double low_margin = 0.0;   ///< 2.5% quantile over draws
  double high_margin = 0.0;  ///< 97.5% quantile over draws
  double flip_probability = 0.0;
};

struct SimulationResult {
  std::vector<StateSummary> states;  ///< sorted by state code
  std::size_t draws = 0;
  std::uint64_t seed = 0;
  TreatmentModel model;
  std::size_t unknown_counties = 0;
  /// draw-major, one row of state margins per draw (keep_draws only)
  std::vector<std::vector<double>> draw_margins;
  Warnings warnings;
};

/// Two-party Democratic margin in percentage points: 100 (D - R) / (D + R).
double two_party_margin(double dem, double rep);

/// Per draw: impute unknown assignments, remove effects from every treated
/// county, sum votes by state (fractional votes kept), record margins. A flip
/// is a sign change of the state margin relative to the observed one.
SimulationResult simulate_margins(std::span<const CountyVotes> counties, double tau_turnout,
                                  double tau_dvs, const SimulationOptions& options);

/// Reads county rows: unit, state, dem_votes, rep_votes, vap, treated
/// (0/1/unknown), lag_dem_share. Column names come from `columns`, keyed by
/// those role names; absent keys use the role name itself.
std::vector<CountyVotes> load_counties(const CsvTable& table,
                                       const std::vector<std::pair<std::string, std::string>>& columns = {},
                                       Warnings* warnings = nullptr);

}  // namespace synthdid
