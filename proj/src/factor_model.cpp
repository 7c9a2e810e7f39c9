#include "sird/factor_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sird/errors.hpp"

namespace sird {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

Panel Panel::build(std::vector<std::string> names,
                   std::vector<CompartmentSeries> countries) {
  if (countries.size() < 2) throw DataError("panel needs at least two countries");
  if (names.size() != countries.size())
    throw DataError("panel names and series count differ");
  const auto& first = countries.front();
  for (const auto& c : countries) {
    if (c.size() != first.size() || c.dates().front() != first.dates().front())
      throw DataError("panel series must share one daily grid");
  }
  Panel p;
  p.names = std::move(names);
  p.countries = std::move(countries);
  return p;
}

double common_score(std::span<const double> obs, std::span<const double> means,
                    std::span<const double> loadings,
                    std::span<const std::uint8_t> skip) {
  double num = 0.0, denom = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (!skip.empty() && skip[i]) continue;
    num += (obs[i] - means[i]) * loadings[i];
    denom += means[i] * loadings[i] * loadings[i];
  }
  if (!(denom > 0.0))
    throw std::domain_error("common_score: nonpositive pooled Fisher information");
  return num / denom;
}

double common_score_resolution(std::span<const double> obs,
                               std::span<const double> means,
                               std::span<const double> rates,
                               std::span<const double> loadings,
                               std::span<const std::uint8_t> skip) {
  double num = 0.0, denom = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (!skip.empty() && skip[i]) continue;
    const double one_minus = 1.0 - rates[i];
    num += (obs[i] - means[i]) * one_minus * loadings[i];
    denom += means[i] * one_minus * one_minus * loadings[i] * loadings[i];
  }
  if (!(denom > 0.0))
    throw std::domain_error("common_score: nonpositive pooled Fisher information");
  return num / denom;
}

namespace {

template <bool Record>
double run_factor_filter(const Panel& panel, const FactorParams& phi,
                         FactorFilterResult* out) {
  const std::size_t kc = panel.num_countries();
  const std::size_t n = panel.num_days();
  if (phi.country.size() != kc || phi.loadings.size() != kc)
    throw DataError("factor filter: parameter blocks do not match the panel");

  double factor = phi.factor0;
  std::vector<TvpState> states(kc);
  std::vector<double> i_prev(kc), s_prev(kc);
  for (std::size_t i = 0; i < kc; ++i) {
    states[i] = initial_state(phi.country[i]);
    i_prev[i] = panel.countries[i].i0();
    s_prev[i] = panel.countries[i].population() - i_prev[i];
  }

  double ll = 0.0;
  std::vector<double> ll_country(kc, 0.0);
  FilterDiagnostics diag;
  std::vector<double> obs_c(kc), mean_c(kc);
  std::vector<std::uint8_t> skip(kc, 0);

  if constexpr (Record) {
    out->rates.assign(kc, std::vector<RateTriple>(n));
    out->factor_path.assign(n, 0.0);
    out->factor_path[0] = factor;
    for (std::size_t i = 0; i < kc; ++i) {
      TvpState composed = states[i];
      composed.beta.level += phi.loadings[i] * factor;
      out->rates[i][0] = state_rates(composed);
    }
  }

  for (std::size_t t = 1; t < n; ++t) {
    std::vector<ScoreTriple> idio_scores(kc);
    for (std::size_t i = 0; i < kc; ++i) {
      const CompartmentSeries& c = panel.countries[i];
      // Compose the infection level through the factor; resolution rates
      // remain purely idiosyncratic.
      TvpState composed = states[i];
      composed.beta.level += phi.loadings[i] * factor;
      bool clamped = false;
      const RateTriple rates = state_rates(composed, &clamped);
      if (clamped) ++diag.level_clamps;
      if (rates.gamma + rates.nu > 1.0) ++diag.rate_sum_violations;

      const double dc = c.delta_c()[t];
      const double drc = c.delta_rc()[t];
      const double dd = c.delta_d()[t];
      const bool rc_missing = c.rc_missing_at(t);
      const PoissonMeans means =
          poisson_means(rates, i_prev[i], s_prev[i], c.population());

      const auto add_term = [&](double count, double mean) -> bool {
        if (mean > 0.0) {
          const double term = poisson_logpmf(count, mean);
          ll += term;
          ll_country[i] += term;
          return true;
        }
        if (count > 0.0) {
          if constexpr (Record) {
            throw NumericError("impossible data in country " + panel.names[i] +
                               " on " + format_date(c.dates()[t]));
          }
          ll = -kInf;
        }
        return false;
      };
      const bool ok1 = add_term(dc, means.lambda1);
      bool ok2 = true;
      if (!rc_missing) ok2 = add_term(drc, means.lambda2);
      const bool ok3 = add_term(dd, means.lambda3);
      if (!std::isfinite(ll)) return -kInf;

      idio_scores[i].beta = ok1 ? (dc - means.lambda1) / means.lambda1 : 0.0;
      idio_scores[i].gamma =
          (!rc_missing && ok2)
              ? (drc - means.lambda2) / means.lambda2 / (1.0 - rates.gamma)
              : 0.0;
      idio_scores[i].nu =
          ok3 ? (dd - means.lambda3) / means.lambda3 / (1.0 - rates.nu) : 0.0;

      obs_c[i] = dc;
      mean_c[i] = means.lambda1;
      skip[i] = ok1 ? 0 : 1;

      if constexpr (Record) out->rates[i][t] = rates;

      double drc_eff = drc;
      if (rc_missing) {
        drc_eff = std::round(rates.gamma * i_prev[i]);
        drc_eff = std::clamp(drc_eff, 0.0, std::max(0.0, i_prev[i] + dc - dd));
      }
      i_prev[i] = std::max(0.0, i_prev[i] + dc - drc_eff - dd);
      s_prev[i] = std::max(0.0, s_prev[i] - dc);
    }

    // Joint update: the common level moves on the pooled score, the
    // idiosyncratic blocks on their own-country scores. With no usable
    // information (all countries skipped or all loadings zero) the factor
    // freezes.
    double pooled_info = 0.0;
    for (std::size_t i = 0; i < kc; ++i)
      if (!skip[i]) pooled_info += mean_c[i] * phi.loadings[i] * phi.loadings[i];
    const double s_common =
        pooled_info > 0.0 ? common_score(obs_c, mean_c, phi.loadings, skip) : 0.0;
    factor += phi.alpha_common * s_common;
    for (std::size_t i = 0; i < kc; ++i)
      states[i] = advance_state(states[i], phi.country[i], idio_scores[i]);

    if constexpr (Record) out->factor_path[t] = factor;
  }

  if constexpr (Record) {
    out->loglik = ll;
    out->country_loglik = ll_country;
    out->next_states = states;
    out->next_factor = factor;
    out->diag = diag;
  }
  return ll;
}

}  // namespace

FactorFilterResult factor_filter_path(const Panel& panel, const FactorParams& phi) {
  FactorFilterResult out;
  run_factor_filter<true>(panel, phi, &out);
  return out;
}

double factor_filter_loglik(const Panel& panel, const FactorParams& phi) {
  return run_factor_filter<false>(panel, phi, nullptr);
}

FactorParams unpack_factor_params(std::span<const double> x, std::size_t k_countries,
                                  double factor0) {
  FactorParams phi;
  phi.factor0 = factor0;
  phi.country.resize(k_countries);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < k_countries; ++i) {
    phi.country[i] = unpack_params(x.subspan(pos, 24), false, false);
    pos += 24;
  }
  phi.alpha_common = x[pos++];
  phi.loadings.assign(k_countries, 1.0);
  for (std::size_t i = 1; i < k_countries; ++i) phi.loadings[i] = x[pos++];
  return phi;
}

std::vector<double> pack_factor_params(const FactorParams& phi) {
  std::vector<double> x;
  for (const auto& c : phi.country) {
    const auto v = pack_params(c, false, false);
    x.insert(x.end(), v.begin(), v.end());
  }
  x.push_back(phi.alpha_common);
  for (std::size_t i = 1; i < phi.loadings.size(); ++i) x.push_back(phi.loadings[i]);
  return x;
}

FactorModel make_factor_model(const Panel& panel) {
  FactorModel model;
  const std::size_t kc = panel.num_countries();
  model.k_countries = kc;

  // Identification: the common level starts at the first country's
  // method-of-moments infection start; that country's loading is one.
  model.factor0 = moment_start(panel.countries.front())[0];
  const double factor0 = model.factor0;

  LikelihoodModel& lik = model.lik;
  int offset = 0;
  for (std::size_t i = 0; i < kc; ++i) {
    TvpModel single = make_tvp_model(panel.countries[i], false);
    for (const auto& nm : single.lik.names)
      lik.names.push_back(panel.names[i] + "." + nm);
    for (const auto& [bname, idx] : single.lik.blocks) {
      std::vector<int> shifted;
      for (int j : idx) shifted.push_back(j + offset);
      lik.blocks.push_back({panel.names[i] + "." + bname, shifted});
    }
    // The factor carries the first-country start; each country's
    // idiosyncratic level start nets out its loaded share of it.
    const double loading_start = i == 0 ? 1.0 : 0.5;
    std::vector<double> st = single.lik.start;
    st[0] -= loading_start * factor0;
    lik.start.insert(lik.start.end(), st.begin(), st.end());
    offset += 24;
  }
  lik.names.push_back("alpha_common");
  lik.blocks.push_back({"common", {offset}});
  lik.start.push_back(0.1);
  std::vector<int> loading_idx;
  for (std::size_t i = 1; i < kc; ++i) {
    lik.names.push_back("tau_" + panel.names[i]);
    loading_idx.push_back(offset + static_cast<int>(i));
    lik.start.push_back(0.5);
  }
  if (!loading_idx.empty()) lik.blocks.push_back({"loadings", loading_idx});

  lik.log_lik = [&panel, kc, factor0](std::span<const double> x) {
    return factor_filter_loglik(panel, unpack_factor_params(x, kc, factor0));
  };
  return model;
}

}  // namespace sird
