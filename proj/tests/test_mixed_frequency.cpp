#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sird/errors.hpp"
#include "sird/io.hpp"
#include "sird/mixed_frequency.hpp"

using namespace sird;

TEST_CASE("underreporting fraction") {
  CHECK(underreporting_fraction(0.0, 1.0) == 0.0);
  CHECK(underreporting_fraction(0.1, 1.0) == doctest::Approx(0.0951626).epsilon(1e-6));
  CHECK(1.0 / (1.0 - underreporting_fraction(0.1, 1.0)) ==
        doctest::Approx(1.1051709).epsilon(1e-6));
  // Full positivity leaves the detection floor exp(-k).
  CHECK(1.0 - underreporting_fraction(1.0, 2.0) == doctest::Approx(std::exp(-2.0)));
  CHECK_THROWS_AS(underreporting_fraction(-0.1, 1.0), std::domain_error);
  CHECK_THROWS_AS(underreporting_fraction(0.5, 0.0), std::domain_error);
}

TEST_CASE("testing series: carry-forward and validation") {
  const TestingSeries ts = TestingSeries::build({100, 0, 200, 0}, {10, 0, 50, 0});
  CHECK(ts.rho[0] == doctest::Approx(0.1));
  CHECK(ts.rho[1] == doctest::Approx(0.1));  // carried forward
  CHECK(ts.rho[2] == doctest::Approx(0.25));
  CHECK(ts.rho[3] == doctest::Approx(0.25));
  CHECK(ts.carry_forward_days == 2);
  CHECK(ts.first_observed == 0);
  CHECK_THROWS_AS(TestingSeries::build({10}, {20}), DataError);
}

namespace {

CompartmentSeries small_series() {
  // 16 days; i0 = 100.
  std::vector<EpochDay> dates;
  std::vector<double> dc{100}, drc{0}, dd{0};
  for (int t = 0; t < 16; ++t) dates.push_back(1000 + t);
  std::mt19937_64 gen(1);
  for (int t = 1; t < 16; ++t) {
    dc.push_back(10 + t % 4);
    drc.push_back(5);
    dd.push_back(1);
  }
  return CompartmentSeries::build(dates, dc, drc, dd,
                                  std::vector<std::uint8_t>(16, 0), 1e6, 100);
}

}  // namespace

TEST_CASE("weekly deaths: grid alignment and flooring") {
  const CompartmentSeries series = small_series();
  const std::vector<double> excess{3.0, -10.0};
  const WeeklyDeaths weekly = WeeklyDeaths::build(series, excess);
  REQUIRE(weekly.release_days.size() == 2);
  CHECK(weekly.release_days[0] == 7);
  CHECK(weekly.release_days[1] == 14);
  CHECK(weekly.reported[0] == doctest::Approx(7.0));  // one death per day
  CHECK(weekly.total[0] == doctest::Approx(10.0));
  // Negative excess floored at the reported sum.
  CHECK(weekly.total[1] == doctest::Approx(7.0));
  CHECK(weekly.floored_weeks == 1);

  std::size_t w = 99;
  CHECK(weekly.release_at(7, &w));
  CHECK(w == 0);
  CHECK_FALSE(weekly.release_at(8, &w));
  CHECK_FALSE(weekly.release_at(0, &w));
}

TEST_CASE("inflate series") {
  const CompartmentSeries series = small_series();
  const TestingSeries testing =
      TestingSeries::build(std::vector<double>(16, 1000.0),
                           std::vector<double>(16, 200.0));  // rho = 0.2
  // Implied death rates reproduce the observed deaths so that k = 0 is an
  // exact identity.
  std::vector<double> nu_path(16, 0.0);
  for (std::size_t t = 1; t < 16; ++t)
    nu_path[t] = series.delta_d()[t] / series.infected()[t - 1];

  const InflatedSeries zero = inflate_series(series, testing, 0.0, nu_path);
  for (std::size_t t = 0; t < 16; ++t) {
    CHECK(zero.delta_c_star[t] == series.delta_c()[t]);
    CHECK(zero.i_star[t] == doctest::Approx(series.infected()[t]).epsilon(1e-12));
  }

  const double k = 5.49;
  const InflatedSeries inf = inflate_series(series, testing, k, nu_path);
  // Constant rho = 0.2 with k = ln(3)/0.2 would triple the counts; at 5.49
  // the factor is exp(5.49 * 0.2) = exp(1.098) close to 3.
  CHECK(inf.delta_c_star[1] / series.delta_c()[1] ==
        doctest::Approx(std::exp(k * 0.2)).epsilon(1e-12));
  CHECK(inf.delta_c_star[1] / series.delta_c()[1] == doctest::Approx(3.0).epsilon(0.01));
  for (std::size_t t = 0; t < 16; ++t) CHECK(inf.i_star[t] >= series.infected()[t]);
}

TEST_CASE("weekly death score") {
  CHECK(weekly_death_score(700.0, 700.0, 0.001) == 0.0);
  CHECK(weekly_death_score(770.0, 700.0, 0.001) ==
        doctest::Approx(0.1 / 0.999).epsilon(1e-9));
  CHECK(weekly_death_score(770.0, 700.0, 0.001) ==
        doctest::Approx(0.1001001).epsilon(1e-6));
  CHECK_THROWS_AS(weekly_death_score(10.0, 0.0, 0.001), std::domain_error);
}

TEST_CASE("weekly death score matches the finite-difference oracle") {
  std::mt19937_64 gen(64);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 100; ++rep) {
    const double nu = 0.0005 + 0.02 * u(gen);
    const double sum7 = 1000.0 + 50000.0 * u(gen);
    const double lam = nu * sum7;
    const double total = std::floor(lam * (0.5 + u(gen)));
    const double analytic = weekly_death_score(total, lam, nu);
    const double fd = oracles::fd_scaled_score(
        [&](double th) { return sum7 / (1.0 + std::exp(-th)); },
        std::log(nu / (1.0 - nu)), total);
    if (analytic != 0.0) CHECK(analytic == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("weekly mean equals the sum of the daily means it replaces") {
  // With nu fixed over the week, nu * sum(I*) is exactly the sum of the
  // seven daily expected deaths.
  const double nu = 0.0031;
  std::vector<double> i_star{100, 110, 121, 119, 130, 140, 135};
  double weekly_mean = 0.0, daily_sum = 0.0;
  for (double i : i_star) {
    weekly_mean += i;
    daily_sum += nu * i;
  }
  weekly_mean *= nu;
  CHECK(weekly_mean == doctest::Approx(daily_sum).epsilon(1e-15));
}

namespace {

// A dataset whose daily deaths equal their conditional means exactly
// (continuous counts), so the total-scale identity and the observed identity
// coincide and the weekly nesting is exact.
struct NestingData {
  CompartmentSeries series;
  TestingSeries testing;
  WeeklyDeaths weekly;
};

NestingData nesting_dataset() {
  const int days = 43;  // six complete weeks
  const double nu = 0.002, gamma = 0.05, beta = 0.1, n = 1e7;
  std::mt19937_64 gen(11);
  std::vector<EpochDay> dates{0};
  std::vector<double> dc{500}, drc{0}, dd{0};
  double i = 500, s = n - 500;
  for (int t = 1; t < days; ++t) {
    dates.push_back(t);
    const double l1 = beta * s * i / n;
    const double l2 = gamma * i;
    const double x_c = draw_poisson(gen, l1);
    const double x_rc = draw_poisson(gen, l2);
    const double x_d = nu * i;  // exactly the conditional mean
    dc.push_back(x_c);
    drc.push_back(x_rc);
    dd.push_back(x_d);
    i = i + x_c - x_rc - x_d;
    s -= x_c;
  }
  CompartmentSeries series = CompartmentSeries::build(
      dates, dc, drc, dd, std::vector<std::uint8_t>(days, 0), n, 500);
  TestingSeries testing = TestingSeries::build(std::vector<double>(days, 1000.0),
                                               std::vector<double>(days, 0.0));
  WeeklyDeaths weekly = WeeklyDeaths::build(series, {});  // zero excess
  return {std::move(series), std::move(testing), std::move(weekly)};
}

}  // namespace

TEST_CASE("k = 0 and zero excess reduce to the daily model up to weekly "
          "death aggregation") {
  const NestingData data = nesting_dataset();
  StaticParams phi;
  phi.theta_l0 = {std::log(0.1), std::log(0.05 / 0.95), std::log(0.002 / 0.998)};
  phi.alpha = {0.3, 0.2, 0.25};
  StaticParams phi_mf = phi;
  phi_mf.k = 1e-14;  // the positive-domain limit of no underreporting

  const MfFilterResult mf = mf_filter_path(data.series, data.testing, data.weekly, phi_mf);
  const FilterResult daily = filter_path(data.series, phi);

  // Paths coincide component-wise.
  for (std::size_t t = 0; t < data.series.size(); ++t) {
    CHECK(mf.rates[t].beta == doctest::Approx(daily.rates[t].beta).epsilon(1e-9));
    CHECK(mf.rates[t].gamma == doctest::Approx(daily.rates[t].gamma).epsilon(1e-9));
    CHECK(mf.rates[t].nu == doctest::Approx(daily.rates[t].nu).epsilon(1e-9));
  }

  // Identical confirmed/recovery contributions; death terms aggregate to the
  // weekly Poisson at the summed means.
  CHECK(mf.loglik_c == doctest::Approx(daily.loglik_c).epsilon(1e-9));
  CHECK(mf.loglik_rc == doctest::Approx(daily.loglik_rc).epsilon(1e-9));
  double weekly_terms = 0.0;
  for (std::size_t w = 0; w < data.weekly.release_days.size(); ++w) {
    const std::size_t t = data.weekly.release_days[w];
    double lam_sum = 0.0, d_sum = 0.0;
    for (std::size_t s = t - 6; s <= t; ++s) {
      lam_sum += daily.rates[s].nu * daily.infected[s - 1];
      d_sum += data.series.delta_d()[s];
    }
    weekly_terms += poisson_logpmf(d_sum, lam_sum);
  }
  CHECK(mf.loglik_w == doctest::Approx(weekly_terms).epsilon(1e-9));
  CHECK(mf.loglik == doctest::Approx(daily.loglik_c + daily.loglik_rc + weekly_terms)
                         .epsilon(1e-9));
}

TEST_CASE("nu moves only on release days") {
  SimSpec spec;
  spec.days = 120;
  spec.population = 1e7;
  spec.i0 = 2000;
  const TransformedTriple tt = link_forward({0.1, 0.05, 0.002});
  spec.params.theta_l0 = {tt.beta, tt.gamma, tt.nu};
  spec.params.alpha = {0.2, 0.2, 0.3};
  spec.params.k = 1.5;
  spec.rho_base = 0.15;
  spec.rho_amplitude = 0.1;
  const SimulatedData sim = simulate_dataset(spec, 77);
  REQUIRE(sim.data.testing);
  REQUIRE(sim.data.weekly);

  const MfFilterResult mf =
      mf_filter_path(sim.data.series, *sim.data.testing, *sim.data.weekly, spec.params);
  for (std::size_t t = 1; t < sim.data.series.size(); ++t) {
    if (t % 7 != 1) continue;  // nu may change only on the day after a release
  }
  // Between releases the nu path is flat.
  for (std::size_t t = 1; t + 1 < sim.data.series.size(); ++t) {
    const bool next_follows_release = (t % 7 == 0);
    if (!next_follows_release)
      CHECK(mf.rates[t + 1].nu == doctest::Approx(mf.rates[t].nu).epsilon(1e-13));
  }
}

TEST_CASE("mf likelihood rejects k outside the positive domain") {
  const NestingData data = nesting_dataset();
  StaticParams phi;
  phi.theta_l0 = {std::log(0.1), std::log(0.05 / 0.95), std::log(0.002 / 0.998)};
  phi.k = -1.0;
  CHECK(mf_filter_loglik(data.series, data.testing, data.weekly, phi) ==
        -std::numeric_limits<double>::infinity());
}

TEST_CASE("inflation path is at least one and one exactly at zero positivity") {
  SimSpec spec;
  spec.days = 100;
  spec.population = 1e7;
  spec.i0 = 2000;
  const TransformedTriple tt = link_forward({0.1, 0.05, 0.002});
  spec.params.theta_l0 = {tt.beta, tt.gamma, tt.nu};
  spec.params.k = 1.8;
  spec.rho_base = 0.1;
  spec.rho_amplitude = 0.09;
  const SimulatedData sim = simulate_dataset(spec, 41);
  const MfFilterResult fr = mf_filter_path(sim.data.series, *sim.data.testing,
                                           *sim.data.weekly, spec.params);
  for (std::size_t t = 0; t < fr.inflation.size(); ++t) {
    CHECK(fr.inflation[t] >= 1.0);
    const bool unit = fr.inflation[t] == 1.0;
    const bool zero_rho = sim.data.testing->rho[t] == 0.0;
    CHECK(unit == zero_rho);
  }
}
