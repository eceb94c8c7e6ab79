#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "synthdid/estimators.hpp"

namespace synthdid {

struct BootstrapOptions {
  std::size_t replicates = 1000;
  std::uint64_t seed = 0;
  /// Worker threads; 0 = hardware concurrency. Never changes the result.
  unsigned threads = 1;
  EstimateOptions estimate{};
};

struct BootstrapResult {
  double tau = 0.0;  ///< full-sample estimate
  double se = 0.0;   ///< sample standard deviation of the replicates
  double ci_low = 0.0;
  double ci_high = 0.0;
  double percentile_low = 0.0;   ///< 2.5% replicate quantile
  double percentile_high = 0.0;  ///< 97.5% replicate quantile
  std::vector<double> replicates;
  std::size_t n_requested = 0;
  std::size_t n_completed = 0;
  std::size_t n_redrawn = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const BootstrapResult&, const BootstrapResult&) = default;
};

/// Unit-block bootstrap: each replicate resamples whole unit rows with
/// replacement (keeping their treatment labels) and re-runs the full
/// estimator, zeta and weights included. Replicate r draws from
/// Stream(seed, r) only, so results do not depend on thread count or order.
/// Draws with an empty arm are redrawn; 100 in a row raise DegenerateResample.
BootstrapResult block_bootstrap(const PanelDataset& panel, const TreatmentDesign& design,
                                const EstimatorSpec& spec, const BootstrapOptions& options);

/// Estimate on an already drawn resample (unit rows, repeats allowed).
EstimateResult estimate_on_rows(const PanelDataset& panel, const TreatmentDesign& design,
                                const EstimatorSpec& spec, std::span<const std::size_t> rows,
                                const EstimateOptions& options);

struct PlaceboResult {
  EstimateResult estimate;
  std::optional<BootstrapResult> bootstrap;
  std::size_t t_pre = 0;
  std::size_t t_post = 0;
};

/// Drops the last `drop_last` periods and pretends treatment started
/// design.t_post() periods before the new end. Needs at least two
/// pre-periods left, else DesignError.
DesignedPanel backdate(const PanelDataset& panel, const TreatmentDesign& design,
                       std::size_t drop_last);

PlaceboResult placebo_backdate(const PanelDataset& panel, const TreatmentDesign& design,
                               const EstimatorSpec& spec, std::size_t drop_last = 1,
                               const EstimateOptions& options = {},
                               std::optional<BootstrapOptions> bootstrap = std::nullopt);

/// Linear-interpolation sample quantile (R type 7) of unsorted data.
double quantile(std::vector<double> values, double probability);

}  // namespace synthdid
