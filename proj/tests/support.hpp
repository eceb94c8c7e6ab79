#pragma once

// Panel builders and data generators shared by the unit and acceptance tests.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "synthdid/panel.hpp"

namespace testing {

using Matrix = std::vector<std::vector<double>>;  // units x periods

inline std::string unit_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "u%04zu", i);
  return buf;
}

inline synthdid::DesignedPanel make_panel(const Matrix& y, const std::vector<bool>& treated,
                                          std::size_t t_post) {
  const std::size_t n = y.size();
  const std::size_t t = y.front().size();
  std::vector<std::string> ids;
  std::vector<std::int64_t> periods;
  std::vector<double> flat;
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back(unit_id(i));
    flat.insert(flat.end(), y[i].begin(), y[i].end());
  }
  for (std::size_t k = 0; k < t; ++k) periods.push_back(static_cast<std::int64_t>(2000 + 4 * k));
  return {synthdid::PanelDataset(std::move(ids), std::move(periods), std::move(flat)),
          synthdid::TreatmentDesign(treated, t - t_post, t_post)};
}

// Treated units first, then controls; outcomes are unit level + N(0, sd).
inline synthdid::DesignedPanel random_panel(std::mt19937_64& rng, std::size_t n_treated,
                                            std::size_t n_control, std::size_t t_pre,
                                            std::size_t t_post, double sd = 1.0) {
  std::normal_distribution<double> z(0.0, 1.0);
  const std::size_t n = n_treated + n_control;
  Matrix y(n, std::vector<double>(t_pre + t_post));
  std::vector<bool> treated(n);
  for (std::size_t i = 0; i < n; ++i) {
    treated[i] = i < n_treated;
    const double level = z(rng);
    const double slope = 0.3 * z(rng);
    for (std::size_t k = 0; k < y[i].size(); ++k) {
      y[i][k] = level + slope * static_cast<double>(k) + sd * z(rng);
    }
  }
  return make_panel(y, treated, t_post);
}

inline std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t n) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> w(n);
  double total = 0.0;
  for (auto& v : w) total += (v = e(rng));
  for (auto& v : w) v /= total;
  return w;
}

// Rank-2 factor model:
//   Y_it = a_i + 0.4 g1_i F1_t + g2_i F2_t + delta D_it + N(0, noise^2)
// F1 rises by one per period through the pre-period and stays at its last
// pre-period value afterwards; F2 is a half cosine cycle over the panel.
enum class Selection { OnTrend, OnLevel };

struct FactorDgp {
  std::size_t units = 200;
  std::size_t periods = 8;
  std::size_t t_post = 1;
  double noise = 0.5;
  double effect = 1.0;
  double trend_scale = 0.4;
  Selection selection = Selection::OnTrend;
};

inline synthdid::DesignedPanel factor_panel(std::mt19937_64& rng, const FactorDgp& dgp) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t T = dgp.periods;
  const std::size_t t_pre = T - dgp.t_post;
  const double pi = std::acos(-1.0);
  for (;;) {
    Matrix y(dgp.units, std::vector<double>(T));
    std::vector<bool> treated(dgp.units);
    std::size_t n_treated = 0;
    for (std::size_t i = 0; i < dgp.units; ++i) {
      const double g1 = z(rng), g2 = z(rng), a = z(rng);
      // About a quarter treated under trend selection, half under level selection.
      const double index = dgp.selection == Selection::OnTrend ? g1 - 1.2 : a;
      treated[i] = u(rng) < 1.0 / (1.0 + std::exp(-index));
      n_treated += treated[i] ? 1 : 0;
      for (std::size_t t = 0; t < T; ++t) {
        const double f1 = static_cast<double>(std::min(t, t_pre - 1));
        const double f2 = std::cos(pi * static_cast<double>(t) / static_cast<double>(T - 1));
        const bool d = treated[i] && t >= t_pre;
        y[i][t] = a + dgp.trend_scale * g1 * f1 + g2 * f2 + (d ? dgp.effect : 0.0) + dgp.noise * z(rng);
      }
    }
    if (n_treated > 0 && n_treated < dgp.units) return make_panel(y, treated, dgp.t_post);
  }
}

}  // namespace testing
