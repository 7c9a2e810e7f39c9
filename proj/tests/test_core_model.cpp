#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sird/core_model.hpp"
#include "sird/errors.hpp"

using namespace sird;

namespace {

CompartmentSeries toy_series() {
  // i0 = 10, then two days with one new case and one recovery each.
  return CompartmentSeries::build(
      {18322, 18323, 18324}, {10, 1, 1}, {0, 1, 1}, {0, 0, 0}, {0, 0, 0}, 1e6, 10);
}

}  // namespace

TEST_CASE("compartment identity and derived paths") {
  const CompartmentSeries s = toy_series();
  CHECK(s.infected()[0] == 10);
  CHECK(s.infected()[1] == 10);  // 10 + 1 - 1 - 0
  CHECK(s.infected()[2] == 10);
  CHECK(s.susceptible()[0] == 1e6 - 10);
  CHECK(s.susceptible()[2] == 1e6 - 12);

  // Violations are rejected at construction.
  CHECK_THROWS_AS(CompartmentSeries::build({0, 2}, {5, 1}, {0, 0}, {0, 0}, {0, 0},
                                           1e6, 5),
                  DataError);  // date gap
  CHECK_THROWS_AS(CompartmentSeries::build({0, 1}, {5, -1}, {0, 0}, {0, 0}, {0, 0},
                                           1e6, 5),
                  DataError);  // negative count
  CHECK_THROWS_AS(CompartmentSeries::build({0, 1}, {2, 0}, {0, 5}, {0, 0}, {0, 0},
                                           1e6, 2),
                  DataError);  // infected would go negative
}

TEST_CASE("link transforms: identity points and fixed-rate medians") {
  const TransformedTriple id = link_forward({1.0, 0.5, 0.5});
  CHECK(id.beta == doctest::Approx(0.0));
  CHECK(id.gamma == doctest::Approx(0.0));
  CHECK(id.nu == doctest::Approx(0.0));

  const TransformedTriple tt = link_forward({0.0122, 0.00746, 0.000133});
  CHECK(tt.beta == doctest::Approx(std::log(0.0122)).epsilon(1e-12));
  CHECK(tt.beta == doctest::Approx(-4.40632).epsilon(1e-4));
  CHECK(tt.gamma == doctest::Approx(-4.89088).epsilon(1e-4));
  CHECK(tt.nu == doctest::Approx(-8.92519).epsilon(1e-4));

  CHECK_THROWS_AS(link_forward({-1.0, 0.5, 0.5}), std::domain_error);
  CHECK_THROWS_AS(link_forward({1.0, 1.5, 0.5}), std::domain_error);
  CHECK_THROWS_AS(link_forward({1.0, 0.5, 0.0}), std::domain_error);
}

TEST_CASE("link transforms are mutual inverses on random valid triples") {
  std::mt19937_64 gen(42);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    RateTriple r{std::exp(u(gen) * 8.0 - 6.0), 0.999 * u(gen) + 5e-4,
                 0.999 * u(gen) + 5e-4};
    const RateTriple back = link_backward(link_forward(r));
    CHECK(back.beta == doctest::Approx(r.beta).epsilon(1e-12));
    CHECK(back.gamma == doctest::Approx(r.gamma).epsilon(1e-12));
    CHECK(back.nu == doctest::Approx(r.nu).epsilon(1e-12));
  }
}

TEST_CASE("poisson means") {
  const PoissonMeans m = poisson_means({0.1, 0.05, 0.01}, 100, 1e6, 1e6);
  CHECK(m.lambda1 == doctest::Approx(10.0));
  CHECK(m.lambda2 == doctest::Approx(5.0));
  CHECK(m.lambda3 == doctest::Approx(1.0));
  // Halving the susceptible share halves the infection intensity only.
  const PoissonMeans h = poisson_means({0.1, 0.05, 0.01}, 100, 5e5, 1e6);
  CHECK(h.lambda1 == doctest::Approx(5.0));
  CHECK(h.lambda2 == doctest::Approx(5.0));
}

TEST_CASE("poisson log density: values, continuity, normalization") {
  CHECK(poisson_logpmf(0, 1.0) == doctest::Approx(-1.0));
  CHECK(poisson_logpmf(5, 5.0) == doctest::Approx(-1.7403021).epsilon(1e-6));
  CHECK_THROWS_AS(poisson_logpmf(1, 0.0), std::domain_error);
  CHECK_THROWS_AS(poisson_logpmf(-1, 1.0), std::domain_error);

  // Non-integer counts via the Gamma-function extension.
  CHECK(std::isfinite(poisson_logpmf(3.7, 4.2)));

  for (double mean : {0.1, 1.0, 10.0, 1000.0}) {
    const int hi = static_cast<int>(mean + 40.0 * std::sqrt(mean) + 50.0);
    double total = 0.0;
    for (int k = 0; k <= hi; ++k) total += std::exp(poisson_logpmf(k, mean));
    CHECK(total == doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("skellam conditional moments") {
  // Balanced inflow and outflow leaves the expected count unchanged.
  const MomentPair bal = skellam_conditional_moments({0.05, 0.03, 0.02}, 500, 1e6, 1e6);
  CHECK(bal.mean == doctest::Approx(500.0));
  CHECK(bal.variance == doctest::Approx(0.05 * 500 + 0.03 * 500 + 0.02 * 500));

  // Reproduction rate 1.64 at the fixed-model medians: growth factor 1.00476.
  const double beta = 0.0122;
  const double resolution = beta / 1.64;
  const RateTriple rates{beta, resolution - 4e-5, 4e-5};
  const MomentPair m = skellam_conditional_moments(rates, 1000, 1e9, 1e9);
  CHECK(m.mean == doctest::Approx(1004.7610).epsilon(1e-6));
}

TEST_CASE("skellam moments match simulation for random parameterizations") {
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    const RateTriple rates{0.02 + 0.3 * u(gen), 0.01 + 0.2 * u(gen),
                           0.001 + 0.05 * u(gen)};
    const double i_prev = 200.0 + 5000.0 * u(gen);
    const double n = 1e7;
    const double s_prev = n * (0.5 + 0.5 * u(gen));
    const auto draws = oracles::mc_infection_changes(rates, i_prev, s_prev, n,
                                                     100000, 2024 + rep);
    const auto mom = oracles::sample_moments(draws);
    const MomentPair pred = skellam_conditional_moments(rates, i_prev, s_prev, n);
    CHECK(std::abs(mom.mean - (pred.mean - i_prev)) <= 3.0 * mom.se_mean);
    CHECK(std::abs(mom.variance - pred.variance) <= 3.0 * mom.se_variance);
  }
}

TEST_CASE("unconditional moments") {
  // Reproduction rate exactly one freezes the expected count.
  const RateTriple crit{0.02, 0.015, 0.005};
  for (int t : {1, 5, 50}) {
    const MomentPair m = unconditional_moments(crit, 1000, t);
    CHECK(m.mean == doctest::Approx(1000.0));
    CHECK(m.variance ==
          doctest::Approx(0.02 * (1.0 + 1.0) * t * 1000.0).epsilon(1e-12));
  }

  // Growth case evaluated directly.
  const double beta = 0.0122;
  const RateTriple g{beta, beta / 1.64 - 4e-5, 4e-5};
  const MomentPair m30 = unconditional_moments(g, 1000, 30);
  CHECK(m30.mean == doctest::Approx(1000.0 * std::pow(1.0047609756, 30)).epsilon(1e-8));
  CHECK(m30.mean == doctest::Approx(1153.14).epsilon(1e-4));

  // One-step consistency with the conditional moments at S = N.
  const MomentPair c1 = skellam_conditional_moments(g, 1000, 1e9, 1e9);
  const MomentPair u1 = unconditional_moments(g, 1000, 1);
  CHECK(u1.mean == doctest::Approx(c1.mean).epsilon(1e-8));
  CHECK(u1.variance == doctest::Approx(c1.variance).epsilon(1e-8));
}

TEST_CASE("unconditional moments match a branching simulation") {
  const RateTriple rates{0.08, 0.05, 0.01};
  const double i0 = 2000;
  for (int t : {3, 8}) {
    const auto draws = oracles::mc_infected_at(rates, i0, t, 100000, 77 + t);
    const auto mom = oracles::sample_moments(draws);
    const MomentPair pred = unconditional_moments(rates, i0, t);
    CHECK(std::abs(mom.mean - pred.mean) <= 3.0 * mom.se_mean);
    CHECK(std::abs(mom.variance - pred.variance) <= 3.0 * mom.se_variance);
  }
}

TEST_CASE("effective reproduction rate") {
  const RateTriple med{0.0122, 0.00746, 0.000133};
  const double r0 = effective_reproduction(med, 1e6, 1e6);
  CHECK(r0 == doctest::Approx(1.6067430528).epsilon(1e-9));
  CHECK(effective_reproduction(med, 0.0, 1e6) == doctest::Approx(0.0));
  CHECK(effective_reproduction(med, 5e5, 1e6) == doctest::Approx(0.5 * r0));
  CHECK_THROWS_AS(effective_reproduction({1.0, 0.0, 0.0}, 1.0, 1.0),
                  std::domain_error);

  // Degree-one homogeneity in S, degree minus-one in the resolution rates.
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (int i = 0; i < 50; ++i) {
    const RateTriple r{u(gen), 0.4 * u(gen), 0.4 * u(gen)};
    const double s = 1e6 * u(gen);
    const double c = 0.5 + 2.0 * u(gen);
    const double base = effective_reproduction(r, s, 1e6);
    CHECK(effective_reproduction(r, c * s, 1e6) == doctest::Approx(c * base));
    const RateTriple scaled{r.beta, std::min(0.99, c * r.gamma),
                            std::min(0.99, c * r.nu)};
    if (scaled.gamma == c * r.gamma && scaled.nu == c * r.nu)
      CHECK(effective_reproduction(scaled, s, 1e6) == doctest::Approx(base / c));
  }
}
