#include "synthdid/simulation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>

#include "synthdid/errors.hpp"
#include "synthdid/inference.hpp"
#include "synthdid/parallel.hpp"
#include "synthdid/rng.hpp"

namespace synthdid {

namespace {

void warn(Warnings* warnings, std::string message) {
  if (warnings) warnings->push_back(std::move(message));
}

double clamp_share(double value, const char* what, const CountyVotes& county, Warnings* warnings) {
  if (value < 0.0 || value > 1.0) {
    warn(warnings, std::string(what) + " of county '" + county.unit + "' clamped to [0, 1] from " +
                       format_double(value));
    return std::clamp(value, 0.0, 1.0);
  }
  return value;
}

}  // namespace

CountyVotes remove_effects(const CountyVotes& county, double tau_turnout, double tau_dvs,
                           Warnings* warnings) {
  if (county.treated != TreatmentStatus::Treated) {
    throw ContractError("remove_effects called on county '" + county.unit +
                        "' which is not treated");
  }
  if (!(county.vap > 0.0)) {
    throw DataError("county '" + county.unit + "' has zero voting-age population");
  }
  if (tau_turnout == 0.0 && tau_dvs == 0.0) return county;

  const double votes = county.dem_votes + county.rep_votes;
  if (votes > county.vap) {
    warn(warnings, "county '" + county.unit + "' has more two-party votes than voting-age residents");
  }
  const double turnout = votes / county.vap;
  const double share = votes > 0.0 ? county.dem_votes / votes : 0.0;

  const double new_turnout =
      clamp_share(turnout - tau_turnout / 100.0, "turnout", county, warnings);
  const double new_share = clamp_share(share - tau_dvs / 100.0, "Democratic share", county, warnings);

  CountyVotes out = county;
  out.dem_votes = county.vap * new_turnout * new_share;
  out.rep_votes = county.vap * new_turnout * (1.0 - new_share);
  return out;
}

// ---------------------------------------------------------------------------

double TreatmentModel::probability(double x) const {
  const double eta = intercept + slope * x;
  const double p = linear_fallback ? eta : 1.0 / (1.0 + std::exp(-eta));
  return std::clamp(p, 0.001, 0.999);
}

namespace {

TreatmentModel linear_probability_fit(const std::vector<double>& x, const std::vector<double>& y) {
  TreatmentModel m;
  m.linear_fallback = true;
  m.n_fit = x.size();
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  m.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  m.intercept = my - m.slope * mx;
  if (x.size() > 2 && sxx > 0.0) {
    double ssr = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = y[i] - m.intercept - m.slope * x[i];
      ssr += e * e;
    }
    const double s2 = ssr / (n - 2.0);
    m.slope_se = std::sqrt(s2 / sxx);
    m.intercept_se = std::sqrt(s2 * (1.0 / n + mx * mx / sxx));
  }
  return m;
}

bool separated(const std::vector<double>& x, const std::vector<double>& y) {
  double min1 = INFINITY, max1 = -INFINITY, min0 = INFINITY, max0 = -INFINITY;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (y[i] > 0.5) {
      min1 = std::min(min1, x[i]);
      max1 = std::max(max1, x[i]);
    } else {
      min0 = std::min(min0, x[i]);
      max0 = std::max(max0, x[i]);
    }
  }
  if (!std::isfinite(min1) || !std::isfinite(min0)) return true;  // one class only
  return max0 <= min1 || max1 <= min0;
}

}  // namespace

TreatmentModel fit_treatment_model(std::span<const CountyVotes> counties, Warnings* warnings) {
  std::vector<double> x, y;
  for (const auto& c : counties) {
    if (c.treated == TreatmentStatus::Unknown) continue;
    x.push_back(c.lag_dem_share);
    y.push_back(c.treated == TreatmentStatus::Treated ? 1.0 : 0.0);
  }
  if (x.empty()) throw DataError("no counties with known treatment status to fit the imputation model");

  if (separated(x, y)) {
    warn(warnings, "treatment is separated by lag_dem_share; using the linear probability model");
    return linear_probability_fit(x, y);
  }

  Eigen::Vector2d beta = Eigen::Vector2d::Zero();
  Eigen::Matrix2d info = Eigen::Matrix2d::Zero();
  bool converged = false;
  for (int iter = 0; iter < 100; ++iter) {
    Eigen::Vector2d score = Eigen::Vector2d::Zero();
    info.setZero();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double p = 1.0 / (1.0 + std::exp(-(beta[0] + beta[1] * x[i])));
      const Eigen::Vector2d z(1.0, x[i]);
      score += (y[i] - p) * z;
      info += p * (1.0 - p) * z * z.transpose();
    }
    const Eigen::Vector2d step = info.ldlt().solve(score);
    if (!step.allFinite()) break;
    beta += step;
    if (step.cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + beta.cwiseAbs().maxCoeff())) {
      converged = true;
      break;
    }
  }
  if (!converged || !beta.allFinite()) {
    warn(warnings, "logistic fit did not converge; using the linear probability model");
    return linear_probability_fit(x, y);
  }
  // Information at the final estimate.
  info.setZero();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-(beta[0] + beta[1] * x[i])));
    const Eigen::Vector2d z(1.0, x[i]);
    info += p * (1.0 - p) * z * z.transpose();
  }
  const Eigen::Matrix2d cov = info.inverse();

  TreatmentModel m;
  m.intercept = beta[0];
  m.slope = beta[1];
  m.intercept_se = std::sqrt(cov(0, 0));
  m.slope_se = std::sqrt(cov(1, 1));
  m.n_fit = x.size();
  return m;
}

std::vector<bool> impute_treatment(std::span<const CountyVotes> counties,
                                   const TreatmentModel& model, std::uint64_t seed,
                                   std::size_t draw) {
  Stream stream(seed, draw);
  std::vector<bool> out;
  for (const auto& c : counties) {
    if (c.treated != TreatmentStatus::Unknown) continue;
    out.push_back(stream.bernoulli(model.probability(c.lag_dem_share)));
  }
  return out;
}

// ---------------------------------------------------------------------------

double two_party_margin(double dem, double rep) {
  const double total = dem + rep;
  return total > 0.0 ? 100.0 * (dem - rep) / total : 0.0;
}

SimulationResult simulate_margins(std::span<const CountyVotes> counties, double tau_turnout,
                                  double tau_dvs, const SimulationOptions& options) {
  if (options.draws == 0) throw ContractError("simulation needs at least one draw");
  SimulationResult out;
  out.draws = options.draws;
  out.seed = options.seed;

  std::map<std::string, std::size_t> state_index;
  for (const auto& c : counties) state_index.emplace(c.state, 0);
  std::size_t next = 0;
  for (auto& [state, idx] : state_index) idx = next++;
  const std::size_t n_states = state_index.size();
  std::vector<std::size_t> county_state;
  county_state.reserve(counties.size());
  for (const auto& c : counties) county_state.push_back(state_index.at(c.state));

  std::vector<double> obs_dem(n_states, 0.0), obs_rep(n_states, 0.0);
  for (std::size_t k = 0; k < counties.size(); ++k) {
    obs_dem[county_state[k]] += counties[k].dem_votes;
    obs_rep[county_state[k]] += counties[k].rep_votes;
  }

  bool any_unknown = false;
  for (const auto& c : counties) {
    any_unknown = any_unknown || c.treated == TreatmentStatus::Unknown;
    out.unknown_counties += c.treated == TreatmentStatus::Unknown ? 1 : 0;
  }
  if (any_unknown) out.model = fit_treatment_model(counties, &out.warnings);

  // Log data issues once, treating every possibly-treated county as treated.
  for (const auto& c : counties) {
    if (c.treated == TreatmentStatus::Untreated) continue;
    CountyVotes as_treated = c;
    as_treated.treated = TreatmentStatus::Treated;
    remove_effects(as_treated, tau_turnout, tau_dvs, &out.warnings);
  }

  std::vector<std::vector<double>> margins(options.draws, std::vector<double>(n_states, 0.0));
  parallel_for(options.draws, options.threads, [&](std::size_t draw) {
    const std::vector<bool> imputed =
        any_unknown ? impute_treatment(counties, out.model, options.seed, draw) : std::vector<bool>{};
    std::vector<double> dem(n_states, 0.0), rep(n_states, 0.0);
    std::size_t unknown_pos = 0;
    for (std::size_t k = 0; k < counties.size(); ++k) {
      const CountyVotes& c = counties[k];
      bool treated = c.treated == TreatmentStatus::Treated;
      if (c.treated == TreatmentStatus::Unknown) treated = imputed[unknown_pos++];
      if (treated) {
        CountyVotes as_treated = c;
        as_treated.treated = TreatmentStatus::Treated;
        const CountyVotes adjusted = remove_effects(as_treated, tau_turnout, tau_dvs);
        dem[county_state[k]] += adjusted.dem_votes;
        rep[county_state[k]] += adjusted.rep_votes;
      } else {
        dem[county_state[k]] += c.dem_votes;
        rep[county_state[k]] += c.rep_votes;
      }
    }
    for (std::size_t s = 0; s < n_states; ++s) margins[draw][s] = two_party_margin(dem[s], rep[s]);
  });

  auto sign = [](double v) { return (v > 0.0) - (v < 0.0); };
  for (const auto& [state, s] : state_index) {
    StateSummary summary;
    summary.state = state;
    summary.observed_margin = two_party_margin(obs_dem[s], obs_rep[s]);
    std::vector<double> column(options.draws);
    double total = 0.0;
    std::size_t flips = 0;
    for (std::size_t d = 0; d < options.draws; ++d) {
      column[d] = margins[d][s];
      total += column[d] - summary.observed_margin;
      flips += sign(column[d]) != sign(summary.observed_margin) ? 1 : 0;
    }
    // Averaging deviations keeps the no-effect case exact.
    summary.mean_margin = summary.observed_margin + total / static_cast<double>(options.draws);
    summary.low_margin = quantile(column, 0.025);
    summary.high_margin = quantile(column, 0.975);
    summary.flip_probability = static_cast<double>(flips) / static_cast<double>(options.draws);
    out.states.push_back(std::move(summary));
  }
  if (options.keep_draws) out.draw_margins = std::move(margins);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<CountyVotes> load_counties(const CsvTable& table,
                                       const std::vector<std::pair<std::string, std::string>>& columns,
                                       Warnings* warnings) {
  auto column_for = [&](const std::string& role) {
    for (const auto& [r, name] : columns) {
      if (r == role) return table.column(name);
    }
    return table.column(role);
  };
  const std::size_t c_unit = column_for("unit");
  const std::size_t c_state = column_for("state");
  const std::size_t c_dem = column_for("dem_votes");
  const std::size_t c_rep = column_for("rep_votes");
  const std::size_t c_vap = column_for("vap");
  const std::size_t c_treated = column_for("treated");
  const std::size_t c_lag = column_for("lag_dem_share");

  auto number = [&](const std::vector<std::string>& row, std::size_t c, std::size_t r,
                    const char* what) {
    auto v = parse_double(row[c]);
    if (!v || !std::isfinite(*v)) {
      throw ParseError("county row " + std::to_string(r + 1) + ": " + what + " '" + row[c] +
                       "' is not a number");
    }
    return *v;
  };

  std::vector<CountyVotes> out;
  out.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    CountyVotes c;
    c.unit = row[c_unit];
    c.state = row[c_state];
    c.dem_votes = number(row, c_dem, r, "dem_votes");
    c.rep_votes = number(row, c_rep, r, "rep_votes");
    c.vap = number(row, c_vap, r, "vap");
    c.lag_dem_share = number(row, c_lag, r, "lag_dem_share");
    if (c.dem_votes < 0.0 || c.rep_votes < 0.0 || c.vap < 0.0) {
      throw DataError("county '" + c.unit + "' has negative counts");
    }
    if (c.lag_dem_share < 0.0 || c.lag_dem_share > 1.0) {
      throw DataError("county '" + c.unit + "' has lag_dem_share outside [0, 1]");
    }
    const std::string& flag = row[c_treated];
    if (flag == "1" || flag == "true") {
      c.treated = TreatmentStatus::Treated;
    } else if (flag == "0" || flag == "false") {
      c.treated = TreatmentStatus::Untreated;
    } else if (flag == "unknown" || is_missing(flag)) {
      c.treated = TreatmentStatus::Unknown;
    } else {
      throw ParseError("county '" + c.unit + "': treated must be 0, 1 or unknown, got '" + flag + "'");
    }
    if (c.dem_votes + c.rep_votes > c.vap) {
      warn(warnings, "county '" + c.unit + "' has more two-party votes than voting-age residents");
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace synthdid
