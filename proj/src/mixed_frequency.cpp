#include "sird/mixed_frequency.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sird/errors.hpp"

namespace sird {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

TestingSeries TestingSeries::build(std::vector<double> tests,
                                   std::vector<double> positives) {
  if (tests.size() != positives.size())
    throw DataError("testing series columns must have equal length");
  TestingSeries out;
  out.rho.resize(tests.size());
  out.first_observed = tests.size();
  double last_rho = 0.0;
  bool seen = false;
  for (std::size_t t = 0; t < tests.size(); ++t) {
    if (positives[t] < 0.0 || tests[t] < 0.0)
      throw DataError("testing counts must be nonnegative");
    if (tests[t] > 0.0) {
      if (positives[t] > tests[t])
        throw DataError("positives exceed tests at day index " + std::to_string(t));
      last_rho = positives[t] / tests[t];
      if (!seen) out.first_observed = t;
      seen = true;
    } else if (seen) {
      ++out.carry_forward_days;  // zero-test day inherits the last value
    }
    out.rho[t] = seen ? last_rho : 0.0;
  }
  out.tests = std::move(tests);
  out.positives = std::move(positives);
  return out;
}

WeeklyDeaths WeeklyDeaths::build(const CompartmentSeries& series,
                                 std::span<const double> excess_by_week) {
  WeeklyDeaths out;
  const std::size_t n = series.size();
  std::size_t week = 0;
  for (std::size_t t = 7; t < n; t += 7, ++week) {
    double rep = 0.0;
    for (std::size_t s = t - 6; s <= t; ++s) rep += series.delta_d()[s];
    double exc = week < excess_by_week.size() ? excess_by_week[week] : 0.0;
    double tot = rep + exc;
    if (tot < rep) {
      tot = rep;
      exc = 0.0;
      ++out.floored_weeks;
    }
    out.release_days.push_back(t);
    out.reported.push_back(rep);
    out.excess.push_back(exc);
    out.total.push_back(tot);
  }
  return out;
}

bool WeeklyDeaths::release_at(std::size_t t, std::size_t* week_idx) const {
  if (t < 7 || t % 7 != 0) return false;
  const std::size_t k = t / 7 - 1;
  if (k >= release_days.size()) return false;
  if (week_idx) *week_idx = k;
  return true;
}

double underreporting_fraction(double rho, double k) {
  if (!(rho >= 0.0 && rho <= 1.0))
    throw std::domain_error("underreporting_fraction: rho must lie in [0,1]");
  if (!(k > 0.0)) throw std::domain_error("underreporting_fraction: k must be positive");
  return 1.0 - std::exp(-k * rho);
}

InflatedSeries inflate_series(const CompartmentSeries& series,
                              const TestingSeries& testing, double k,
                              std::span<const double> nu_path) {
  const std::size_t n = series.size();
  if (testing.rho.size() != n || nu_path.size() != n)
    throw DataError("inflate_series: inputs must share the daily grid");
  InflatedSeries out;
  out.delta_c_star.resize(n);
  out.delta_rc_star.resize(n);
  out.i_star.resize(n);
  out.s_star.resize(n);

  const auto inflation = [&](std::size_t t) { return std::exp(k * testing.rho[t]); };
  for (std::size_t t = 0; t < n; ++t) {
    if (k > 0.0 && t < testing.first_observed && series.delta_c()[t] > 0.0) {
      throw DataError(
          "inflate_series: positive confirmed count on a day without "
          "positivity data (" + format_date(series.dates()[t]) + ")");
    }
    out.delta_c_star[t] = series.delta_c()[t] * inflation(t);
    out.delta_rc_star[t] = series.delta_rc()[t] * inflation(t);
  }
  out.i_star[0] = series.i0() * inflation(0);
  out.s_star[0] = series.population() - out.i_star[0];
  for (std::size_t t = 1; t < n; ++t) {
    const double deaths = nu_path[t] * out.i_star[t - 1];
    out.i_star[t] = std::max(0.0, out.i_star[t - 1] + out.delta_c_star[t] -
                                      out.delta_rc_star[t] - deaths);
    out.s_star[t] = std::max(0.0, out.s_star[t - 1] - out.delta_c_star[t]);
  }
  return out;
}

double weekly_death_score(double total_weekly, double lambda3_weekly, double nu) {
  if (!(lambda3_weekly > 0.0))
    throw std::domain_error("weekly_death_score: nonpositive weekly death mean");
  return (total_weekly - lambda3_weekly) / lambda3_weekly / (1.0 - nu);
}

namespace {

template <bool Record>
double run_mf_filter(const CompartmentSeries& series, const TestingSeries& testing,
                     const WeeklyDeaths& weekly, const StaticParams& phi,
                     MfFilterResult* out) {
  const std::size_t n = series.size();
  if (testing.rho.size() != n)
    throw DataError("mf_filter: testing series must share the daily grid");
  const double k = phi.k.value_or(0.0);
  if (k < 0.0) return -kInf;
  const double pop = series.population();

  TvpState state = initial_state(phi);
  const double infl0 = std::exp(k * testing.rho[0]);
  double i_prev = series.i0() * infl0;
  double s_prev = pop - i_prev;
  double ll = 0.0, ll_c = 0.0, ll_rc = 0.0, ll_w = 0.0;
  FilterDiagnostics diag;

  // Rolling window of the last seven I* values (I*_{s-1} for s in [t-6, t]).
  std::vector<double> tail;
  tail.reserve(8);
  tail.push_back(i_prev);

  if constexpr (Record) {
    out->rates.resize(n);
    out->i_star.resize(n);
    out->s_star.resize(n);
    out->inflation.resize(n);
    out->i_star[0] = i_prev;
    out->s_star[0] = s_prev;
    out->inflation[0] = infl0;
    out->rates[0] = state_rates(state);
  }

  for (std::size_t t = 1; t < n; ++t) {
    bool clamped = false;
    const RateTriple rates = state_rates(state, &clamped);
    if (clamped) ++diag.level_clamps;
    if (rates.gamma + rates.nu > 1.0) ++diag.rate_sum_violations;

    const double infl = std::exp(k * testing.rho[t]);
    const double dc_star = series.delta_c()[t] * infl;
    const double drc_star = series.delta_rc()[t] * infl;
    const bool rc_missing = series.rc_missing_at(t);

    const double l1 = rates.beta * s_prev * i_prev / pop;
    const double l2 = rates.gamma * i_prev;

    const auto add_term = [&](double count, double mean, double& bucket) -> bool {
      if (mean > 0.0) {
        const double term = poisson_logpmf(count, mean);
        ll += term;
        bucket += term;
        return true;
      }
      if (count > 0.0) {
        if constexpr (Record) {
          throw NumericError(
              "impossible data: positive count with zero conditional mean on " +
              format_date(series.dates()[t]));
        }
        ll = -kInf;
      }
      return false;
    };

    const bool ok1 = add_term(dc_star, l1, ll_c);
    bool ok2 = true;
    if (!rc_missing) ok2 = add_term(drc_star, l2, ll_rc);
    if (!std::isfinite(ll)) return -kInf;

    ScoreTriple score{};
    score.beta = ok1 ? (dc_star - l1) / l1 : 0.0;
    score.gamma =
        (!rc_missing && ok2) ? (drc_star - l2) / l2 / (1.0 - rates.gamma) : 0.0;

    // Weekly death block: the nu score moves only on release days.
    std::size_t week_idx = 0;
    if (weekly.release_at(t, &week_idx)) {
      double sum7 = 0.0;
      const std::size_t m = tail.size();
      for (std::size_t j = m >= 7 ? m - 7 : 0; j < m; ++j) sum7 += tail[j];
      const double lam_w = rates.nu * sum7;
      const double total = weekly.total[week_idx];
      if (lam_w > 0.0) {
        const double term = poisson_logpmf(total, lam_w);
        ll += term;
        ll_w += term;
        score.nu = weekly_death_score(total, lam_w, rates.nu);
      } else if (total > 0.0) {
        if constexpr (Record)
          throw NumericError("impossible weekly death total with zero mean");
        return -kInf;
      }
    }

    // Inflated-identity update with expected daily deaths; missing recoveries
    // contribute the model-expected outflow.
    double drc_eff = drc_star;
    if (rc_missing) drc_eff = rates.gamma * i_prev;
    const double deaths = rates.nu * i_prev;
    i_prev = std::max(0.0, i_prev + dc_star - drc_eff - deaths);
    s_prev = std::max(0.0, s_prev - dc_star);
    tail.push_back(i_prev);
    if (tail.size() > 7) tail.erase(tail.begin());

    if constexpr (Record) {
      out->rates[t] = rates;
      out->i_star[t] = i_prev;
      out->s_star[t] = s_prev;
      out->inflation[t] = infl;
    }

    state = advance_state(state, phi, score);
  }

  if constexpr (Record) {
    out->loglik = ll;
    out->loglik_c = ll_c;
    out->loglik_rc = ll_rc;
    out->loglik_w = ll_w;
    out->next_state = state;
    out->diag = diag;
    out->tail_i_star = tail;
    out->last_rho = testing.rho[n - 1];
  }
  return ll;
}

}  // namespace

MfFilterResult mf_filter_path(const CompartmentSeries& series,
                              const TestingSeries& testing,
                              const WeeklyDeaths& weekly, const StaticParams& phi) {
  MfFilterResult out;
  run_mf_filter<true>(series, testing, weekly, phi, &out);
  return out;
}

double mf_filter_loglik(const CompartmentSeries& series, const TestingSeries& testing,
                        const WeeklyDeaths& weekly, const StaticParams& phi) {
  return run_mf_filter<false>(series, testing, weekly, phi, nullptr);
}

MfModel make_mf_model(const CompartmentSeries& series, const TestingSeries& testing,
                      const WeeklyDeaths& weekly, bool seasonal,
                      bool joint_psi_blocks) {
  MfModel model;
  TvpModel daily = make_tvp_model(series, false, seasonal, joint_psi_blocks);
  model.mask = daily.mask;
  model.mask.include_k = true;
  const ParamMask mask = model.mask;
  const int k_idx = static_cast<int>(daily.lik.names.size());
  model.lik.names = daily.lik.names;
  model.lik.names.push_back("k");
  model.lik.blocks = daily.lik.blocks;
  model.lik.blocks.push_back({"k", {k_idx}});
  model.lik.positive = {k_idx};
  model.lik.log_lik = [&series, &testing, &weekly, mask](std::span<const double> x) {
    return mf_filter_loglik(series, testing, weekly, unpack_params(x, mask));
  };

  // Deterministic start: a poor k guess can drive the imputed total-infection
  // path to zero mid-sample (likelihood -inf), so pick the best start from a
  // small grid.
  model.lik.start = daily.lik.start;
  model.lik.start.push_back(1.0);
  double best_k = 1.0;
  double best_ll = -kInf;
  for (const double cand : {0.25, 0.5, 1.0, 2.0, 4.0, 8.0}) {
    model.lik.start.back() = cand;
    const double ll = model.lik.log_lik(model.lik.start);
    if (std::isfinite(ll) && ll > best_ll) {
      best_ll = ll;
      best_k = cand;
    }
  }
  model.lik.start.back() = best_k;
  return model;
}

}  // namespace sird
