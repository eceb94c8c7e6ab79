#include "synthdid/inference.hpp"

#include <algorithm>
#include <cmath>

#include "synthdid/errors.hpp"
#include "synthdid/parallel.hpp"
#include "synthdid/rng.hpp"

namespace synthdid {

namespace {

constexpr std::size_t kMaxConsecutiveRedraws = 100;

struct Draw {
  std::vector<std::size_t> rows;
  std::size_t redrawn = 0;
};

Draw draw_units(const TreatmentDesign& design, std::uint64_t seed, std::size_t replicate) {
  const std::size_t n = design.treated_mask().size();
  Stream stream(seed, replicate);
  Draw draw;
  draw.rows.resize(n);
  for (;;) {
    std::size_t treated = 0;
    for (auto& row : draw.rows) {
      row = static_cast<std::size_t>(stream.below(n));
      treated += design.is_treated(row) ? 1 : 0;
    }
    if (treated > 0 && treated < n) return draw;
    if (++draw.redrawn >= kMaxConsecutiveRedraws) {
      throw DegenerateResample("replicate " + std::to_string(replicate) + ": " +
                               std::to_string(kMaxConsecutiveRedraws) +
                               " consecutive resamples had an empty arm");
    }
  }
}

}  // namespace

double quantile(std::vector<double> values, double probability) {
  if (values.empty()) throw ContractError("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * probability;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

EstimateResult estimate_on_rows(const PanelDataset& panel, const TreatmentDesign& design,
                                const EstimatorSpec& spec, std::span<const std::size_t> rows,
                                const EstimateOptions& options) {
  std::vector<std::string> ids;
  std::vector<bool> treated;
  ids.reserve(rows.size());
  treated.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    ids.push_back(panel.units()[rows[k]] + "#" + std::to_string(k));
    treated.push_back(design.is_treated(rows[k]));
  }
  const PanelDataset sample = panel.select(rows, panel.num_periods(), std::move(ids));
  const TreatmentDesign sample_design(std::move(treated), design.t_pre(), design.t_post());
  return estimate(sample, sample_design, spec, options);
}

BootstrapResult block_bootstrap(const PanelDataset& panel, const TreatmentDesign& design,
                                const EstimatorSpec& spec, const BootstrapOptions& options) {
  if (options.replicates < 2) throw ContractError("bootstrap needs at least 2 replicates");

  BootstrapResult out;
  out.seed = options.seed;
  out.n_requested = options.replicates;
  out.tau = estimate(panel, design, spec, options.estimate).tau;

  std::vector<double> taus(options.replicates, 0.0);
  std::vector<std::size_t> redraws(options.replicates, 0);
  parallel_for(options.replicates, options.threads, [&](std::size_t r) {
    const Draw draw = draw_units(design, options.seed, r);
    redraws[r] = draw.redrawn;
    taus[r] = estimate_on_rows(panel, design, spec, draw.rows, options.estimate).tau;
  });

  double mean = 0.0;
  for (double t : taus) mean += t;
  mean /= static_cast<double>(taus.size());
  double ss = 0.0;
  for (double t : taus) ss += (t - mean) * (t - mean);
  out.se = std::sqrt(ss / static_cast<double>(taus.size() - 1));
  out.ci_low = out.tau - 1.96 * out.se;
  out.ci_high = out.tau + 1.96 * out.se;
  out.percentile_low = quantile(taus, 0.025);
  out.percentile_high = quantile(taus, 0.975);
  for (std::size_t k : redraws) out.n_redrawn += k;
  out.n_completed = taus.size();
  out.replicates = std::move(taus);
  return out;
}

DesignedPanel backdate(const PanelDataset& panel, const TreatmentDesign& design,
                       std::size_t drop_last) {
  const std::size_t T = panel.num_periods();
  if (drop_last >= T || T - drop_last <= design.t_post() ||
      T - drop_last - design.t_post() < 2) {
    throw DesignError("placebo dropping " + std::to_string(drop_last) +
                      " period(s) leaves fewer than 2 pre-treatment periods");
  }
  const std::size_t kept = T - drop_last;
  std::vector<std::size_t> rows(panel.num_units());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  PanelDataset truncated = panel.select(rows, kept);
  TreatmentDesign placebo(design.treated_mask(), kept - design.t_post(), design.t_post());
  return {std::move(truncated), std::move(placebo)};
}

PlaceboResult placebo_backdate(const PanelDataset& panel, const TreatmentDesign& design,
                               const EstimatorSpec& spec, std::size_t drop_last,
                               const EstimateOptions& options,
                               std::optional<BootstrapOptions> bootstrap) {
  const DesignedPanel placebo = backdate(panel, design, drop_last);
  PlaceboResult out;
  out.t_pre = placebo.design.t_pre();
  out.t_post = placebo.design.t_post();
  out.estimate = estimate(placebo.panel, placebo.design, spec, options);
  if (bootstrap) {
    bootstrap->estimate = options;
    out.bootstrap = block_bootstrap(placebo.panel, placebo.design, spec, *bootstrap);
  }
  return out;
}

}  // namespace synthdid
