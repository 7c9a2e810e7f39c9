#include "sird/score_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "sird/errors.hpp"

namespace sird {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Rotation {
  double c, s;
};

const std::array<Rotation, kHarmonics>& rotations() {
  static const std::array<Rotation, kHarmonics> rot = [] {
    std::array<Rotation, kHarmonics> r{};
    for (int j = 0; j < kHarmonics; ++j) {
      const double lambda = 2.0 * std::numbers::pi * (j + 1) / 7.0;
      r[j] = {std::cos(lambda), std::sin(lambda)};
    }
    return r;
  }();
  return rot;
}

double clamp_level(double x, std::uint64_t* clamps) {
  if (x > kLevelClamp) {
    if (clamps) ++*clamps;
    return kLevelClamp;
  }
  if (x < -kLevelClamp) {
    if (clamps) ++*clamps;
    return -kLevelClamp;
  }
  return x;
}

}  // namespace

ScoreTriple scaled_scores(const DayObs& obs, const PoissonMeans& means,
                          const RateTriple& rates) {
  ScoreTriple s{};
  if (!(means.lambda1 > 0.0))
    throw std::domain_error("scaled_scores: nonpositive confirmed-case mean");
  s.beta = (obs.dc - means.lambda1) / means.lambda1;
  if (!obs.rc_missing) {
    if (!(means.lambda2 > 0.0))
      throw std::domain_error("scaled_scores: nonpositive recovery mean");
    s.gamma = (obs.drc - means.lambda2) / means.lambda2 / (1.0 - rates.gamma);
  }
  if (!obs.d_missing) {
    if (!(means.lambda3 > 0.0))
      throw std::domain_error("scaled_scores: nonpositive death mean");
    s.nu = (obs.dd - means.lambda3) / means.lambda3 / (1.0 - rates.nu);
  }
  return s;
}

double level_step(double level_prev, double alpha, double score_prev) {
  return level_prev + alpha * score_prev;
}

std::array<HarmonicPair, kHarmonics> seasonal_step(
    const std::array<HarmonicPair, kHarmonics>& prev,
    const std::array<double, 3>& psi, const std::array<double, 3>& psi_star,
    double score_prev) {
  std::array<HarmonicPair, kHarmonics> next{};
  const auto& rot = rotations();
  for (int j = 0; j < kHarmonics; ++j) {
    next[j].c = rot[j].c * prev[j].c + rot[j].s * prev[j].s + psi[j] * score_prev;
    next[j].s = -rot[j].s * prev[j].c + rot[j].c * prev[j].s + psi_star[j] * score_prev;
  }
  return next;
}

TvpState initial_state(const StaticParams& phi) {
  TvpState st{};
  st.beta.level = phi.theta_l0[0];
  st.gamma.level = phi.theta_l0[1];
  st.nu.level = phi.theta_l0[2];
  return st;
}

TvpState advance_state(const TvpState& state, const StaticParams& phi,
                       const ScoreTriple& score) {
  TvpState next;
  next.beta.level = level_step(state.beta.level, phi.alpha[0], score.beta);
  next.gamma.level = level_step(state.gamma.level, phi.alpha[1], score.gamma);
  next.nu.level = level_step(state.nu.level, phi.alpha[2], score.nu);
  next.beta.seas = seasonal_step(state.beta.seas, phi.psi[0], phi.psi_star[0], score.beta);
  next.gamma.seas = seasonal_step(state.gamma.seas, phi.psi[1], phi.psi_star[1], score.gamma);
  next.nu.seas = seasonal_step(state.nu.seas, phi.psi[2], phi.psi_star[2], score.nu);
  return next;
}

RateTriple state_rates(const TvpState& state, bool* clamped) {
  std::uint64_t clamps = 0;
  const double b = clamp_level(state.beta.composite(), &clamps);
  const double g = clamp_level(state.gamma.composite(), &clamps);
  const double n = clamp_level(state.nu.composite(), &clamps);
  if (clamped) *clamped = clamps > 0;
  return link_backward({b, g, n});
}

namespace {

// Shared forward pass. In recording mode impossible data throws; in
// likelihood mode it yields -inf so MH candidates are rejected.
template <bool Record>
double run_filter(const CompartmentSeries& series, const StaticParams& phi,
                  FilterResult* out) {
  const std::size_t n = series.size();
  const double pop = series.population();
  TvpState state = initial_state(phi);
  double i_prev = series.i0();
  double s_prev = pop - series.i0();
  double ll = 0.0, ll_c = 0.0, ll_rc = 0.0, ll_d = 0.0;
  FilterDiagnostics diag;
  ScoreTriple score{};

  if constexpr (Record) {
    out->rates.resize(n);
    out->means.assign(n, PoissonMeans{});
    out->infected.resize(n);
    out->susceptible.resize(n);
    out->infected[0] = i_prev;
    out->susceptible[0] = s_prev;
    out->rates[0] = state_rates(state);
  }

  for (std::size_t t = 1; t < n; ++t) {
    bool clamped = false;
    const RateTriple rates = state_rates(state, &clamped);
    if (clamped) ++diag.level_clamps;
    if (rates.gamma + rates.nu > 1.0) ++diag.rate_sum_violations;

    const double dc = series.delta_c()[t];
    const double drc = series.delta_rc()[t];
    const double dd = series.delta_d()[t];
    const bool rc_missing = series.rc_missing_at(t);
    const PoissonMeans means = poisson_means(rates, i_prev, s_prev, pop);

    // Likelihood terms; a zero mean admits only a zero count.
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
    const bool ok1 = add_term(dc, means.lambda1, ll_c);
    bool ok2 = true;
    if (!rc_missing) ok2 = add_term(drc, means.lambda2, ll_rc);
    const bool ok3 = add_term(dd, means.lambda3, ll_d);
    if (!std::isfinite(ll)) return -kInf;

    score.beta = ok1 ? (dc - means.lambda1) / means.lambda1 : 0.0;
    score.gamma = (!rc_missing && ok2)
                      ? (drc - means.lambda2) / means.lambda2 / (1.0 - rates.gamma)
                      : 0.0;
    score.nu = ok3 ? (dd - means.lambda3) / means.lambda3 / (1.0 - rates.nu) : 0.0;

    if constexpr (Record) {
      out->rates[t] = rates;
      out->means[t] = means;
    }

    // Compartment bookkeeping for the next day. Missing recoveries are
    // replaced by the model-expected count, capped so I stays nonnegative.
    double drc_eff = drc;
    if (rc_missing) {
      drc_eff = std::round(rates.gamma * i_prev);
      drc_eff = std::clamp(drc_eff, 0.0, std::max(0.0, i_prev + dc - dd));
    }
    i_prev = std::max(0.0, i_prev + dc - drc_eff - dd);
    s_prev = std::max(0.0, s_prev - dc);
    if constexpr (Record) {
      out->infected[t] = i_prev;
      out->susceptible[t] = s_prev;
    }

    state = advance_state(state, phi, score);
  }

  if constexpr (Record) {
    out->loglik = ll;
    out->loglik_c = ll_c;
    out->loglik_rc = ll_rc;
    out->loglik_d = ll_d;
    out->next_state = state;
    out->last_score = score;
    out->diag = diag;
  }
  return ll;
}

}  // namespace

FilterResult filter_path(const CompartmentSeries& series, const StaticParams& phi) {
  FilterResult out;
  run_filter<true>(series, phi, &out);
  return out;
}

double filter_loglik(const CompartmentSeries& series, const StaticParams& phi) {
  return run_filter<false>(series, phi, nullptr);
}

double fp_loglik(const CompartmentSeries& series, const RateTriple& rates) {
  StaticParams phi;
  const TransformedTriple tt = link_forward(rates);
  phi.theta_l0 = {tt.beta, tt.gamma, tt.nu};
  return filter_loglik(series, phi);
}

StaticParams unpack_params(std::span<const double> x, const ParamMask& mask) {
  StaticParams phi;
  std::size_t pos = 0;
  for (int p = 0; p < 3; ++p) phi.theta_l0[p] = x[pos++];
  const int np = mask.beta_only ? 1 : 3;
  for (int p = 0; p < np; ++p) phi.alpha[p] = x[pos++];
  if (mask.seasonal) {
    for (int p = 0; p < np; ++p)
      for (int j = 0; j < 3; ++j) phi.psi[p][j] = x[pos++];
    for (int p = 0; p < np; ++p)
      for (int j = 0; j < 3; ++j) phi.psi_star[p][j] = x[pos++];
  }
  if (mask.include_k) phi.k = x[pos++];
  return phi;
}

std::vector<double> pack_params(const StaticParams& phi, const ParamMask& mask) {
  std::vector<double> x;
  x.reserve(mask.dim());
  for (int p = 0; p < 3; ++p) x.push_back(phi.theta_l0[p]);
  const int np = mask.beta_only ? 1 : 3;
  for (int p = 0; p < np; ++p) x.push_back(phi.alpha[p]);
  if (mask.seasonal) {
    for (int p = 0; p < np; ++p)
      for (int j = 0; j < 3; ++j) x.push_back(phi.psi[p][j]);
    for (int p = 0; p < np; ++p)
      for (int j = 0; j < 3; ++j) x.push_back(phi.psi_star[p][j]);
  }
  if (mask.include_k) x.push_back(phi.k.value_or(1.0));
  return x;
}

StaticParams unpack_params(std::span<const double> x, bool beta_only,
                           bool include_k) {
  return unpack_params(x, ParamMask{beta_only, true, include_k});
}

std::vector<double> pack_params(const StaticParams& phi, bool beta_only,
                                bool include_k) {
  return pack_params(phi, ParamMask{beta_only, true, include_k});
}

std::array<double, 3> moment_start(const CompartmentSeries& series, int window) {
  const std::size_t n = series.size();
  const std::size_t hi = std::min<std::size_t>(n, static_cast<std::size_t>(window) + 1);
  double sum_c = 0, sum_rc = 0, sum_d = 0, sum_i = 0, sum_si = 0;
  std::size_t n_rc = 0;
  for (std::size_t t = 1; t < hi; ++t) {
    sum_c += series.delta_c()[t];
    sum_d += series.delta_d()[t];
    sum_i += series.infected()[t - 1];
    sum_si += series.susceptible()[t - 1] * series.infected()[t - 1];
    if (!series.rc_missing_at(t)) {
      sum_rc += series.delta_rc()[t];
      ++n_rc;
    }
  }
  const auto safe_rate = [](double num, double den, double fallback) {
    const double r = (den > 0.0 && num > 0.0) ? num / den : fallback;
    return std::clamp(r, 1e-8, 0.5);
  };
  const double beta = std::clamp(
      (sum_si > 0.0 && sum_c > 0.0) ? sum_c * series.population() / sum_si : 0.1,
      1e-8, 50.0);
  const double gamma = safe_rate(sum_rc, n_rc > 0 ? sum_i : 0.0, 0.05);
  const double nu = safe_rate(sum_d, sum_i, 0.005);
  const TransformedTriple tt = link_forward({beta, gamma, nu});
  return {tt.beta, tt.gamma, tt.nu};
}

namespace {

const char* kParamTags[3] = {"beta", "gamma", "nu"};

}  // namespace

TvpModel make_tvp_model(const CompartmentSeries& series, bool beta_only,
                        bool seasonal, bool joint_psi_blocks) {
  TvpModel model;
  model.mask = ParamMask{beta_only, seasonal, false};
  const ParamMask mask = model.mask;
  const int np = beta_only ? 1 : 3;

  LikelihoodModel& lik = model.lik;
  for (int p = 0; p < 3; ++p)
    lik.names.push_back(std::string("theta0_") + kParamTags[p]);
  for (int p = 0; p < np; ++p)
    lik.names.push_back(std::string("alpha_") + kParamTags[p]);
  if (seasonal) {
    for (int p = 0; p < np; ++p)
      for (int j = 1; j <= 3; ++j)
        lik.names.push_back("psi" + std::to_string(j) + "_" + kParamTags[p]);
    for (int p = 0; p < np; ++p)
      for (int j = 1; j <= 3; ++j)
        lik.names.push_back("psi_star" + std::to_string(j) + "_" + kParamTags[p]);
  }

  std::vector<int> alpha_idx;
  for (int p = 0; p < np; ++p) alpha_idx.push_back(3 + p);
  lik.blocks.push_back({"alpha", alpha_idx});
  lik.blocks.push_back({"theta0", {0, 1, 2}});
  if (seasonal) {
    const int base = 3 + np;
    const auto symbol_blocks = [&](const std::string& tag, int offset) {
      if (joint_psi_blocks) {
        std::vector<int> idx;
        for (int i = 0; i < 3 * np; ++i) idx.push_back(offset + i);
        lik.blocks.push_back({tag, idx});
      } else {
        for (int p = 0; p < np; ++p) {
          lik.blocks.push_back({tag + "_" + kParamTags[p],
                                {offset + 3 * p, offset + 3 * p + 1,
                                 offset + 3 * p + 2}});
        }
      }
    };
    symbol_blocks("psi", base);
    symbol_blocks("psi_star", base + 3 * np);
  }

  StaticParams start;
  start.theta_l0 = moment_start(series);
  start.alpha = beta_only ? std::array<double, 3>{0.1, 0.0, 0.0}
                          : std::array<double, 3>{0.1, 0.1, 0.1};
  lik.start = pack_params(start, mask);

  lik.log_lik = [&series, mask](std::span<const double> x) {
    return filter_loglik(series, unpack_params(x, mask));
  };
  return model;
}

}  // namespace sird
