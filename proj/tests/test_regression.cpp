#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "synthdid/csv.hpp"
#include "synthdid/errors.hpp"
#include "synthdid/regression.hpp"

using namespace synthdid;

namespace {

struct Design {
  Eigen::VectorXd y;
  Eigen::MatrixXd x;
  std::vector<std::size_t> state;
  std::size_t n_states = 0;
};

Design random_design(std::mt19937_64& rng, std::size_t n, std::size_t k, std::size_t n_states) {
  std::normal_distribution<double> z;
  Design d;
  d.n_states = n_states;
  d.y.resize(static_cast<Eigen::Index>(n));
  d.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  std::vector<double> effect(n_states);
  for (auto& e : effect) e = z(rng);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    d.state.push_back(r % n_states);
    double mean = effect[r % n_states];
    for (std::size_t c = 0; c < k; ++c) {
      d.x(row, static_cast<Eigen::Index>(c)) = z(rng) + 0.5 * effect[r % n_states];
      mean += 0.3 * static_cast<double>(c + 1) * d.x(row, static_cast<Eigen::Index>(c));
    }
    // heteroskedastic errors
    d.y(row) = mean + (0.5 + std::abs(d.x(row, 0))) * z(rng);
  }
  return d;
}

Eigen::MatrixXd with_dummies(const Design& d) {
  Eigen::MatrixXd full(d.x.rows(), d.x.cols() + static_cast<Eigen::Index>(d.n_states));
  full.leftCols(d.x.cols()) = d.x;
  full.rightCols(static_cast<Eigen::Index>(d.n_states)).setZero();
  for (Eigen::Index r = 0; r < d.x.rows(); ++r) {
    full(r, d.x.cols() + static_cast<Eigen::Index>(d.state[static_cast<std::size_t>(r)])) = 1.0;
  }
  return full;
}

std::vector<std::string> names(std::size_t k) {
  std::vector<std::string> out;
  for (std::size_t c = 0; c < k; ++c) out.push_back("x" + std::to_string(c + 1));
  return out;
}

}  // namespace

TEST_CASE("absorbed fixed effects match explicit dummies") {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const auto d = random_design(rng, 150 + 10 * rep, 1 + rep % 3, 2 + rep % 6);
    const auto r = fe_ols(d.y, d.x, names(d.x.cols()), {d.state}, {"state"});
    const auto o = oracle::dense_ols_hc1(with_dummies(d), d.y);
    CHECK(r.n_obs == static_cast<std::size_t>(d.y.size()));
    CHECK(r.absorbed_dof == d.n_states - 1);
    for (Eigen::Index c = 0; c < d.x.cols(); ++c) {
      const auto i = static_cast<std::size_t>(c);
      CHECK(r.coefficients[i] == doctest::Approx(o.beta(c)).epsilon(1e-9));
      CHECK(r.robust_se[i] == doctest::Approx(o.se(c)).epsilon(1e-8));
    }
  }
}

TEST_CASE("without fixed effects an intercept is added") {
  std::mt19937_64 rng(2);
  const auto d = random_design(rng, 300, 2, 1);
  const auto r = fe_ols(d.y, d.x, names(2));
  REQUIRE(r.names.size() == 3);
  CHECK(r.names[0] == "(Intercept)");
  Eigen::MatrixXd x(d.x.rows(), 3);
  x.col(0).setOnes();
  x.rightCols(2) = d.x;
  const auto o = oracle::dense_ols_hc1(x, d.y);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(r.coefficients[c] == doctest::Approx(o.beta(static_cast<Eigen::Index>(c))).epsilon(1e-10));
    CHECK(r.robust_se[c] == doctest::Approx(o.se(static_cast<Eigen::Index>(c))).epsilon(1e-9));
  }
  CHECK(r.index("x2") == 2);
  CHECK_THROWS_AS(r.index("nope"), ConfigError);
}

TEST_CASE("an exact linear relation has zero standard errors") {
  Eigen::VectorXd y(6);
  Eigen::MatrixXd x(6, 1);
  for (int i = 0; i < 6; ++i) {
    x(i, 0) = i;
    y(i) = 2.0 + 3.0 * i;
  }
  const auto r = fe_ols(y, x, {"x"});
  CHECK(r.coefficients[1] == doctest::Approx(3.0));
  CHECK(r.robust_se[1] < 1e-10);
  CHECK(r.r_squared == doctest::Approx(1.0));
}

TEST_CASE("collinear columns are named") {
  std::mt19937_64 rng(3);
  auto d = random_design(rng, 100, 3, 4);
  d.x.col(2) = 2.0 * d.x.col(0) - d.x.col(1);
  try {
    fe_ols(d.y, d.x, names(3), {d.state}, {"state"});
    FAIL("expected RankDeficient");
  } catch (const RankDeficient& e) {
    CHECK(e.column() == "x3");
  }
  // constant within states: swallowed by the fixed effect
  for (Eigen::Index r = 0; r < d.x.rows(); ++r) d.x(r, 1) = static_cast<double>(d.state[static_cast<std::size_t>(r)]);
  CHECK_THROWS_AS(fe_ols(d.y, d.x.leftCols(2), names(2), {d.state}, {"state"}), RankDeficient);
}

TEST_CASE("table front end: interactions, missing rows, categorical fixed effects") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z;
  std::ostringstream csv;
  csv << "grant,share,urban,state\n";
  const char* states[] = {"AZ", "GA", "PA", "WI"};
  std::vector<double> ys, as, bs;
  std::vector<std::size_t> st;
  for (int i = 0; i < 240; ++i) {
    const double a = z(rng), b = z(rng);
    const double y = 1.0 + 0.5 * a - 0.2 * b + 0.3 * a * b + 0.4 * (i % 4) + 0.3 * z(rng);
    if (i % 37 == 5) {
      csv << "NA," << a << ',' << b << ',' << states[i % 4] << '\n';
      continue;
    }
    if (i % 53 == 7) {
      csv << y << ",," << b << ',' << states[i % 4] << '\n';
      continue;
    }
    csv << y << ',' << a << ',' << b << ',' << states[i % 4] << '\n';
    ys.push_back(y);
    as.push_back(a);
    bs.push_back(b);
    st.push_back(static_cast<std::size_t>(i % 4));
  }
  const auto table = parse_csv(csv.str());
  const auto r = fe_ols(table, "grant", {"share", "urban", "share*urban"}, {"state"});
  CHECK(r.n_obs == ys.size());
  CHECK(r.n_dropped == 240 - ys.size());
  CHECK(r.fe_groups == std::vector<std::string>{"state"});

  Eigen::MatrixXd x(static_cast<Eigen::Index>(ys.size()), 3 + 4);
  x.setZero();
  Eigen::VectorXd y(static_cast<Eigen::Index>(ys.size()));
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    x(row, 0) = as[i];
    x(row, 1) = bs[i];
    x(row, 2) = as[i] * bs[i];
    x(row, 3 + static_cast<Eigen::Index>(st[i])) = 1.0;
    y(row) = ys[i];
  }
  const auto o = oracle::dense_ols_hc1(x, y);
  for (std::size_t c = 0; c < 3; ++c) {
    // csv round trip of the inputs costs a few digits
    CHECK(r.coefficients[c] == doctest::Approx(o.beta(static_cast<Eigen::Index>(c))).epsilon(1e-6));
    CHECK(r.robust_se[c] == doctest::Approx(o.se(static_cast<Eigen::Index>(c))).epsilon(1e-6));
  }
  CHECK_THROWS_AS(fe_ols(table, "grant", {"nothere"}), ConfigError);
}

TEST_CASE("binned scatter") {
  SUBCASE("even split") {
    const std::vector<double> x{6, 1, 5, 2, 4, 3}, y{60, 10, 50, 20, 40, 30};
    const auto bins = binned_scatter(x, y, 3);
    REQUIRE(bins.size() == 3);
    CHECK(bins[0].mean_x == 1.5);
    CHECK(bins[1].mean_y == 35.0);
    CHECK(bins[2].count == 2);
  }
  SUBCASE("remainder goes to the lowest bins") {
    std::vector<double> x, y;
    for (int i = 0; i < 7; ++i) {
      x.push_back(i);
      y.push_back(2 * i);
    }
    const auto bins = binned_scatter(x, y, 3);
    CHECK(bins[0].count == 3);
    CHECK(bins[1].count == 2);
    CHECK(bins[2].count == 2);
    CHECK(bins[0].mean_x == 1.0);
    CHECK(bins[2].mean_y == 11.0);
  }
  SUBCASE("ties keep input order") {
    const std::vector<double> x{1, 1, 1, 1}, y{1, 2, 3, 4};
    const auto bins = binned_scatter(x, y, 2);
    CHECK(bins[0].mean_y == 1.5);
    CHECK(bins[1].mean_y == 3.5);
  }
  SUBCASE("bad bin counts") {
    const std::vector<double> x{1, 2}, y{1, 2};
    CHECK_THROWS_AS(binned_scatter(x, y, 0), BinError);
    CHECK_THROWS_AS(binned_scatter(x, y, 3), BinError);
  }
}
