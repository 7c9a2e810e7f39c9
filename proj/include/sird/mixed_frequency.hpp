#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sird/core_model.hpp"
#include "sird/score_dynamics.hpp"

namespace sird {

// Daily testing record aligned to the compartment series. rho is the test
// positivity; on days with no tests the last observed value is carried
// forward (counted in carry_forward_days).
struct TestingSeries {
  std::vector<double> tests;
  std::vector<double> positives;
  std::vector<double> rho;
  std::uint64_t carry_forward_days = 0;
  std::size_t first_observed = 0;  // first index with tests > 0 (size() if none)

  static TestingSeries build(std::vector<double> tests,
                             std::vector<double> positives);
};

// Weekly death totals (reported plus excess) released on day indices 7k of
// the aligned grid. Negative excess is floored so totals never drop below
// the reported sum (counted in floored_weeks).
struct WeeklyDeaths {
  std::vector<std::size_t> release_days;  // 7, 14, ... on the daily grid
  std::vector<double> reported;           // weekly sums of reported deaths
  std::vector<double> excess;
  std::vector<double> total;
  std::uint64_t floored_weeks = 0;

  static WeeklyDeaths build(const CompartmentSeries& series,
                            std::span<const double> excess_by_week);
  bool release_at(std::size_t t, std::size_t* week_idx) const;
};

// Share of infections missed by testing: delta = 1 - exp(-k * rho).
double underreporting_fraction(double rho, double k);

// Reported-to-total inflation of the confirmed and recovery counts, with the
// infected/susceptible paths rebuilt from the inflated identity using the
// supplied expected daily death rates.
struct InflatedSeries {
  std::vector<double> delta_c_star, delta_rc_star;
  std::vector<double> i_star, s_star;
};
InflatedSeries inflate_series(const CompartmentSeries& series,
                              const TestingSeries& testing, double k,
                              std::span<const double> nu_path);

// Scaled score of a weekly death total against its Poisson mean
// nu * sum of the last seven I* values; zero off release days.
double weekly_death_score(double total_weekly, double lambda3_weekly, double nu);

struct MfFilterResult {
  std::vector<RateTriple> rates;
  std::vector<double> i_star, s_star;
  std::vector<double> inflation;  // 1 / (1 - delta_t)
  double loglik{};
  double loglik_c{}, loglik_rc{}, loglik_w{};
  TvpState next_state;
  FilterDiagnostics diag;
  // Terminal context for forecasting.
  std::vector<double> tail_i_star;  // last 7 entries (oldest first)
  double last_rho{};
};

// Forward filter of the mixed-frequency model: daily Poisson terms for the
// inflated confirmed/recovery counts, a weekly Poisson term for total deaths
// on release days, and the nu recursion frozen between releases.
MfFilterResult mf_filter_path(const CompartmentSeries& series,
                              const TestingSeries& testing,
                              const WeeklyDeaths& weekly, const StaticParams& phi);
double mf_filter_loglik(const CompartmentSeries& series, const TestingSeries& testing,
                        const WeeklyDeaths& weekly, const StaticParams& phi);

// Posterior target; adds the positive-constrained k block to the daily model.
// The series/testing/weekly references must outlive the returned model.
struct MfModel {
  LikelihoodModel lik;
  ParamMask mask{false, true, true};

  StaticParams unpack(std::span<const double> x) const {
    return unpack_params(x, mask);
  }
};
MfModel make_mf_model(const CompartmentSeries& series, const TestingSeries& testing,
                      const WeeklyDeaths& weekly, bool seasonal = true,
                      bool joint_psi_blocks = false);

}  // namespace sird
