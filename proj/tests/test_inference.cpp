#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "support.hpp"
#include "synthdid/errors.hpp"
#include "synthdid/inference.hpp"
#include "synthdid/rng.hpp"

using namespace synthdid;
using testing::Matrix;

TEST_CASE("streams depend only on seed and index") {
  Stream a(42, 7), b(42, 7), c(42, 8), d(43, 7);
  bool differs_c = false, differs_d = false;
  for (int i = 0; i < 10; ++i) {
    const auto x = a.next();
    CHECK(x == b.next());
    differs_c = differs_c || x != c.next();
    differs_d = differs_d || x != d.next();
  }
  CHECK(differs_c);
  CHECK(differs_d);
  Stream s(1, 0);
  std::vector<int> counts(6, 0);
  for (int i = 0; i < 60000; ++i) ++counts[static_cast<std::size_t>(s.below(6))];
  for (int c6 : counts) CHECK(std::abs(c6 - 10000) < 500);
  for (int i = 0; i < 1000; ++i) {
    const double u = s.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("quantile interpolates between order statistics") {
  CHECK(quantile({3, 1, 2, 4}, 0.5) == doctest::Approx(2.5));
  CHECK(quantile({3, 1, 2, 4}, 0.0) == 1.0);
  CHECK(quantile({3, 1, 2, 4}, 1.0) == 4.0);
  CHECK(quantile({1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}, 0.025) == doctest::Approx(1.25));
  CHECK_THROWS_AS(quantile({}, 0.5), ContractError);
}

TEST_CASE("copies of one unit give a zero standard error") {
  Matrix y(12, std::vector<double>{1, 4, 2, 8, 5});
  std::vector<bool> treated(12, false);
  for (std::size_t i = 0; i < 4; ++i) treated[i] = true;
  const auto dp = testing::make_panel(y, treated, 1);
  BootstrapOptions opt;
  opt.replicates = 50;
  opt.seed = 3;
  for (const auto& spec : standard_variants()) {
    const auto r = block_bootstrap(dp.panel, dp.design, spec, opt);
    CHECK(std::abs(r.tau) < 1e-12);
    CHECK(r.se < 1e-12);
  }
}

TEST_CASE("bootstrap is reproducible and thread-count free") {
  std::mt19937_64 rng(1);
  const auto dp = testing::random_panel(rng, 4, 20, 6, 1);
  BootstrapOptions opt;
  opt.replicates = 60;
  opt.seed = 99;
  const EstimatorSpec spec{UnitScheme::Sdid, TimeScheme::Sdid};
  const auto a = block_bootstrap(dp.panel, dp.design, spec, opt);
  const auto b = block_bootstrap(dp.panel, dp.design, spec, opt);
  opt.threads = 4;
  const auto c = block_bootstrap(dp.panel, dp.design, spec, opt);
  CHECK(a == b);
  CHECK(a == c);
  opt.seed = 100;
  CHECK_FALSE(block_bootstrap(dp.panel, dp.design, spec, opt).replicates == a.replicates);

  CHECK(a.n_requested == 60);
  CHECK(a.n_completed == 60);
  CHECK(a.replicates.size() == 60);
  CHECK(a.ci_low == doctest::Approx(a.tau - 1.96 * a.se));
  CHECK(a.ci_high == doctest::Approx(a.tau + 1.96 * a.se));
  CHECK(a.percentile_low == quantile(a.replicates, 0.025));
  CHECK(a.percentile_high == quantile(a.replicates, 0.975));
  CHECK(a.tau == estimate(dp.panel, dp.design, spec).tau);
}

TEST_CASE("draws with an empty arm are redrawn") {
  // one treated unit of three: a third of all draws lack it
  const Matrix y{{1, 2, 3, 5}, {0, 1, 1, 1}, {2, 2, 3, 3}};
  const auto dp = testing::make_panel(y, {true, false, false}, 1);
  BootstrapOptions opt;
  opt.replicates = 200;
  opt.seed = 5;
  const auto r = block_bootstrap(dp.panel, dp.design, {UnitScheme::Uniform, TimeScheme::Uniform}, opt);
  CHECK(r.n_redrawn > 20);
  CHECK(r.n_completed == 200);
}

TEST_CASE("bootstrap standard error tracks the analytic variance of a simple double difference") {
  // uniform weights, two pre-periods, one post: tau is a difference of arm
  // means of d_i = y_i3 - (y_i1 + y_i2) / 2
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z;
  const std::size_t n = 400, n_tr = 100;
  Matrix y(n, std::vector<double>(3));
  std::vector<bool> treated(n);
  for (std::size_t i = 0; i < n; ++i) {
    treated[i] = i < n_tr;
    const double level = z(rng);
    const double noise = treated[i] ? 2.0 : 1.0;
    for (auto& v : y[i]) v = level + noise * z(rng);
  }
  auto plug_in = [&](bool arm) {
    std::vector<double> d;
    for (std::size_t i = 0; i < n; ++i) {
      if (treated[i] == arm) d.push_back(y[i][2] - 0.5 * (y[i][0] + y[i][1]));
    }
    double m = 0.0, ss = 0.0;
    for (double v : d) m += v;
    m /= static_cast<double>(d.size());
    for (double v : d) ss += (v - m) * (v - m);
    return ss / static_cast<double>(d.size()) / static_cast<double>(d.size());
  };
  const double analytic = std::sqrt(plug_in(true) + plug_in(false));
  const auto dp = testing::make_panel(y, treated, 1);
  BootstrapOptions opt;
  opt.replicates = 2000;
  opt.seed = 11;
  const auto r = block_bootstrap(dp.panel, dp.design, {UnitScheme::Uniform, TimeScheme::Uniform}, opt);
  CHECK(r.se == doctest::Approx(analytic).epsilon(0.10));
}

TEST_CASE("backdating") {
  std::mt19937_64 rng(2);
  const auto dp = testing::random_panel(rng, 3, 10, 5, 2);
  const auto b = backdate(dp.panel, dp.design, 1);
  CHECK(b.panel.num_periods() == 6);
  CHECK(b.design.t_post() == 2);
  CHECK(b.design.t_pre() == 4);
  CHECK(b.panel.periods().back() == dp.panel.periods()[5]);
  CHECK_THROWS_AS(backdate(dp.panel, dp.design, 4), DesignError);
  CHECK_NOTHROW(backdate(dp.panel, dp.design, 3));
  CHECK_THROWS_AS(backdate(dp.panel, dp.design, 7), DesignError);

  SUBCASE("an effect confined to the true post-period leaves the placebo at zero") {
    Matrix y(8, std::vector<double>(6));
    std::normal_distribution<double> z;
    std::vector<double> beta(6);
    for (auto& v : beta) v = z(rng);
    std::vector<bool> treated(8);
    for (std::size_t i = 0; i < 8; ++i) {
      treated[i] = i < 2;
      const double alpha = treated[i] ? 0.2 * z(rng) : z(rng);
      for (std::size_t t = 0; t < 6; ++t) y[i][t] = alpha + beta[t] + ((treated[i] && t == 5) ? 4.0 : 0.0);
    }
    const auto p = testing::make_panel(y, treated, 1);
    for (const auto& spec : standard_variants()) {
      CHECK(std::abs(estimate(p.panel, p.design, spec).tau - 4.0) < 1e-8);
      const auto pl = placebo_backdate(p.panel, p.design, spec, 1);
      CHECK(std::abs(pl.estimate.tau) < 1e-8);
      CHECK(pl.t_pre == 4);
      CHECK(pl.t_post == 1);
    }
  }
  SUBCASE("placebo with bootstrap") {
    BootstrapOptions opt;
    opt.replicates = 30;
    opt.seed = 4;
    const auto pl = placebo_backdate(dp.panel, dp.design, {UnitScheme::Sdid, TimeScheme::Sdid}, 1, {}, opt);
    REQUIRE(pl.bootstrap.has_value());
    CHECK(pl.bootstrap->tau == pl.estimate.tau);
  }
}
