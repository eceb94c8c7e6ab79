#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "synthdid/csv.hpp"
#include "synthdid/errors.hpp"
#include "synthdid/simulation.hpp"

using namespace synthdid;

namespace {

CountyVotes county(std::string unit, std::string state, double dem, double rep, double vap,
                   TreatmentStatus treated, double lag = 0.5) {
  return {std::move(unit), std::move(state), dem, rep, vap, treated, lag};
}

std::vector<CountyVotes> random_counties(std::mt19937_64& rng, std::size_t n, double unknown_share) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const char* states[] = {"AZ", "GA", "MI", "PA", "WI"};
  std::vector<CountyVotes> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double lag = 0.2 + 0.6 * u(rng);
    const double vap = 1000.0 + 50000.0 * u(rng);
    const double turnout = 0.4 + 0.3 * u(rng);
    const double share = std::clamp(lag + 0.1 * (u(rng) - 0.5), 0.05, 0.95);
    TreatmentStatus status = u(rng) < 1.0 / (1.0 + std::exp(-(-2.0 + 4.0 * lag)))
                                 ? TreatmentStatus::Treated
                                 : TreatmentStatus::Untreated;
    if (u(rng) < unknown_share) status = TreatmentStatus::Unknown;
    out.push_back(county("c" + std::to_string(i), states[i % 5], vap * turnout * share,
                         vap * turnout * (1.0 - share), vap, status, lag));
  }
  return out;
}

}  // namespace

TEST_CASE("effect removal in share space") {
  const auto c = county("a", "GA", 300, 200, 1000, TreatmentStatus::Treated);
  const auto r = remove_effects(c, 1.0, 1.0);
  CHECK(r.dem_votes == doctest::Approx(289.1));
  CHECK(r.rep_votes == doctest::Approx(200.9));
  CHECK(r.vap == 1000.0);

  const auto same = remove_effects(c, 0.0, 0.0);
  CHECK(same.dem_votes == 300.0);
  CHECK(same.rep_votes == 200.0);

  // turnout-only removal keeps the two-party share
  const auto t = remove_effects(c, 5.0, 0.0);
  CHECK(t.dem_votes / (t.dem_votes + t.rep_votes) == doctest::Approx(0.6));
  CHECK(t.dem_votes + t.rep_votes == doctest::Approx(450.0));
  // share-only removal keeps total votes
  const auto s = remove_effects(c, 0.0, 3.0);
  CHECK(s.dem_votes + s.rep_votes == doctest::Approx(500.0));
}

TEST_CASE("effect removal errors and clamping") {
  CHECK_THROWS_AS(remove_effects(county("a", "GA", 300, 200, 1000, TreatmentStatus::Untreated), 1, 1),
                  ContractError);
  CHECK_THROWS_AS(remove_effects(county("a", "GA", 300, 200, 1000, TreatmentStatus::Unknown), 1, 1),
                  ContractError);
  CHECK_THROWS_AS(remove_effects(county("a", "GA", 300, 200, 0, TreatmentStatus::Treated), 1, 1),
                  DataError);
  Warnings w;
  const auto r = remove_effects(county("a", "GA", 10, 490, 1000, TreatmentStatus::Treated), 0, 5, &w);
  CHECK(r.dem_votes == 0.0);
  CHECK(r.rep_votes == doctest::Approx(500.0));
  CHECK(w.size() == 1);
}

TEST_CASE("two-party margin") {
  CHECK(two_party_margin(60, 40) == doctest::Approx(20.0));
  CHECK(two_party_margin(0, 0) == 0.0);
}

TEST_CASE("logistic treatment model recovers its coefficients") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<CountyVotes> counties;
  for (int i = 0; i < 10000; ++i) {
    const double lag = u(rng);
    const bool treated = u(rng) < 1.0 / (1.0 + std::exp(-(-1.5 + 3.0 * lag)));
    counties.push_back(county("c", "GA", 1, 1, 10, treated ? TreatmentStatus::Treated : TreatmentStatus::Untreated, lag));
  }
  const auto m = fit_treatment_model(counties);
  CHECK_FALSE(m.linear_fallback);
  CHECK(m.n_fit == 10000);
  CHECK(std::abs(m.intercept + 1.5) < 3.0 * m.intercept_se);
  CHECK(std::abs(m.slope - 3.0) < 3.0 * m.slope_se);
  CHECK(m.probability(0.5) == doctest::Approx(1.0 / (1.0 + std::exp(-(m.intercept + 0.5 * m.slope)))));
}

TEST_CASE("separated data falls back to the linear model") {
  std::vector<CountyVotes> counties;
  for (int i = 0; i < 20; ++i) {
    counties.push_back(county("k" + std::to_string(i), "GA", 1, 1, 10, TreatmentStatus::Treated, 0.05 * i));
  }
  counties.push_back(county("u", "GA", 1, 1, 10, TreatmentStatus::Unknown, 0.5));
  Warnings w;
  const auto m = fit_treatment_model(counties, &w);
  CHECK(m.linear_fallback);
  CHECK_FALSE(w.empty());
  CHECK(m.probability(0.5) >= 0.999);
  for (std::size_t draw = 0; draw < 50; ++draw) {
    const auto imputed = impute_treatment(counties, m, 7, draw);
    REQUIRE(imputed.size() == 1);
    CHECK(imputed[0]);
  }
}

TEST_CASE("imputation is a pure function of seed and draw") {
  std::mt19937_64 rng(2);
  const auto counties = random_counties(rng, 300, 0.3);
  const auto m = fit_treatment_model(counties);
  CHECK(impute_treatment(counties, m, 5, 3) == impute_treatment(counties, m, 5, 3));
  CHECK_FALSE(impute_treatment(counties, m, 5, 3) == impute_treatment(counties, m, 5, 4));
}

TEST_CASE("zero effects reproduce the observed margins exactly") {
  std::mt19937_64 rng(3);
  const auto counties = random_counties(rng, 400, 0.2);
  SimulationOptions opt;
  opt.draws = 50;
  opt.seed = 1;
  const auto r = simulate_margins(counties, 0.0, 0.0, opt);
  REQUIRE(r.states.size() == 5);
  CHECK(r.states.front().state == "AZ");
  for (const auto& s : r.states) {
    CHECK(s.mean_margin == s.observed_margin);
    CHECK(s.low_margin == s.observed_margin);
    CHECK(s.high_margin == s.observed_margin);
    CHECK(s.flip_probability == 0.0);
  }
}

TEST_CASE("larger share effects never raise the simulated margin") {
  std::mt19937_64 rng(4);
  const auto counties = random_counties(rng, 300, 0.25);
  SimulationOptions opt;
  opt.draws = 40;
  opt.seed = 2;
  std::vector<double> previous;
  for (int k = 0; k <= 10; ++k) {
    const auto r = simulate_margins(counties, 0.5, 0.1 * k, opt);
    for (std::size_t s = 0; s < r.states.size(); ++s) {
      if (!previous.empty()) CHECK(r.states[s].mean_margin <= previous[s] + 1e-9);
    }
    previous.clear();
    for (const auto& s : r.states) previous.push_back(s.mean_margin);
  }
}

TEST_CASE("a single treated county flips exactly past its threshold") {
  // share 0.53: removing more than 3 points hands the state to the other side
  const std::vector<CountyVotes> one{county("a", "WI", 530, 470, 2000, TreatmentStatus::Treated)};
  SimulationOptions opt;
  opt.draws = 10;
  opt.seed = 3;
  CHECK(simulate_margins(one, 0.0, 2.99, opt).states[0].flip_probability == 0.0);
  CHECK(simulate_margins(one, 0.0, 3.01, opt).states[0].flip_probability == 1.0);
  CHECK(simulate_margins(one, 0.0, 2.0, opt).states[0].mean_margin == doctest::Approx(2.0));
}

TEST_CASE("simulation is reproducible and thread-count free") {
  std::mt19937_64 rng(5);
  const auto counties = random_counties(rng, 200, 0.3);
  SimulationOptions opt;
  opt.draws = 64;
  opt.seed = 9;
  opt.keep_draws = true;
  const auto a = simulate_margins(counties, 1.0, 0.8, opt);
  opt.threads = 4;
  const auto b = simulate_margins(counties, 1.0, 0.8, opt);
  CHECK(a.draw_margins == b.draw_margins);
  CHECK(a.draw_margins.size() == 64);
  CHECK(a.unknown_counties > 0);
  for (std::size_t s = 0; s < a.states.size(); ++s) {
    CHECK(a.states[s].mean_margin == b.states[s].mean_margin);
    CHECK(a.states[s].flip_probability == b.states[s].flip_probability);
  }
}

TEST_CASE("county table parsing") {
  const auto table = parse_csv(
      "fips,st,d,r,vap,treated,lag\n"
      "1,GA,10,20,100,1,0.4\n"
      "2,GA,30,20,100,unknown,0.6\n"
      "3,AZ,5,5,100,0,0.5\n");
  const std::vector<std::pair<std::string, std::string>> cols{
      {"unit", "fips"}, {"state", "st"}, {"dem_votes", "d"}, {"rep_votes", "r"}, {"lag_dem_share", "lag"}};
  const auto c = load_counties(table, cols);
  REQUIRE(c.size() == 3);
  CHECK(c[0].treated == TreatmentStatus::Treated);
  CHECK(c[1].treated == TreatmentStatus::Unknown);
  CHECK(c[2].treated == TreatmentStatus::Untreated);
  CHECK(c[1].lag_dem_share == 0.6);

  CHECK_THROWS_AS(load_counties(parse_csv("fips,st,d,r,vap,treated,lag\n1,GA,-1,2,100,1,0.5\n"), cols),
                  DataError);
  CHECK_THROWS_AS(load_counties(parse_csv("fips,st,d,r,vap,treated,lag\n1,GA,1,2,100,maybe,0.5\n"), cols),
                  ParseError);
  CHECK_THROWS_AS(load_counties(parse_csv("fips,st,d,r,vap,treated,lag\n1,GA,1,2,100,1,1.5\n"), cols),
                  DataError);
  CHECK_THROWS_AS(load_counties(table), ConfigError);
}
