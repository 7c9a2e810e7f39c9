#include "sird/forecasting.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <boost/math/distributions/students_t.hpp>

#include "sird/errors.hpp"
#include "sird/rng.hpp"

namespace sird {

namespace {

constexpr double kMeanFloor = 1e-8;

std::vector<int> draw_indices(int available, int max_draws) {
  std::vector<int> idx;
  if (max_draws <= 0 || available <= max_draws) {
    idx.resize(available);
    for (int i = 0; i < available; ++i) idx[i] = i;
    return idx;
  }
  // Deterministic stride thinning.
  idx.reserve(max_draws);
  for (int i = 0; i < max_draws; ++i)
    idx.push_back(static_cast<int>(static_cast<long long>(i) * available / max_draws));
  return idx;
}

void summarize(ForecastSet& fs, double level) {
  const int h_max = static_cast<int>(fs.draws_c.size());
  fs.horizons.resize(h_max);
  fs.confirmed.resize(h_max);
  fs.deaths.resize(h_max);
  for (int h = 0; h < h_max; ++h) {
    fs.horizons[h] = h + 1;
    const auto fill = [&](const std::vector<double>& draws, HorizonSummary& out) {
      out.point_median = median_of(draws);
      out.point_mean = mean_of(draws);
      const auto interval = hpdi(draws, level);
      out.lo = interval.first;
      out.hi = interval.second;
    };
    fill(fs.draws_c[h], fs.confirmed[h]);
    fill(fs.draws_d[h], fs.deaths[h]);
  }
}

double floored(double mean, std::uint64_t* flags) {
  if (mean < kMeanFloor) {
    ++*flags;
    return kMeanFloor;
  }
  return mean;
}

}  // namespace

ForecastSet simulate_forecast(
    const CompartmentSeries& series, const PosteriorDraws& posterior,
    const std::function<StaticParams(std::span<const double>)>& unpack,
    const ForecastConfig& config) {
  if (posterior.num_draws() == 0) throw NumericError("forecast: empty posterior");
  ForecastSet fs;
  fs.draws_c.assign(config.h_max, {});
  fs.draws_d.assign(config.h_max, {});

  const std::vector<int> use = draw_indices(posterior.num_draws(), config.max_draws);
  std::vector<double> row(posterior.draws.cols());
  for (int m : use) {
    for (int j = 0; j < posterior.draws.cols(); ++j) row[j] = posterior.draws(m, j);
    const StaticParams phi = unpack(row);
    const FilterResult fit = filter_path(series, phi);
    const double i0 = fit.infected.back();
    const double s0 = fit.susceptible.back();

    for (int rep = 0; rep < config.reps_per_draw; ++rep) {
      std::mt19937_64 gen = make_engine(config.seed, static_cast<std::uint64_t>(m),
                                        static_cast<std::uint64_t>(rep));
      TvpState state = fit.next_state;
      double i_prev = i0, s_prev = s0;
      for (int h = 0; h < config.h_max; ++h) {
        const RateTriple rates = state_rates(state);
        const double l1 =
            floored(rates.beta * s_prev * i_prev / series.population(), &fs.floor_flags);
        const double l2 = floored(rates.gamma * i_prev, &fs.floor_flags);
        const double l3 = floored(rates.nu * i_prev, &fs.floor_flags);
        const double dc = draw_poisson(gen, l1);
        const double drc = draw_poisson(gen, l2);
        const double dd = draw_poisson(gen, l3);
        fs.draws_c[h].push_back(dc);
        fs.draws_d[h].push_back(dd);

        const ScoreTriple score = scaled_scores({dc, drc, dd, false, false},
                                                {l1, l2, l3}, rates);
        state = advance_state(state, phi, score);
        i_prev = std::max(0.0, i_prev + dc - drc - dd);
        s_prev = std::max(0.0, s_prev - dc);
      }
    }
  }
  summarize(fs, config.level);
  return fs;
}

ForecastSet simulate_forecast_fixed(const CompartmentSeries& series,
                                    const FpPosterior& posterior,
                                    const ForecastConfig& config) {
  ForecastSet fs;
  fs.draws_c.assign(config.h_max, {});
  fs.draws_d.assign(config.h_max, {});
  const int n_draws = std::max(1, config.max_draws > 0 ? config.max_draws : 2000);
  const std::vector<RateTriple> rate_draws =
      sample_fp_posterior(posterior, n_draws, splitmix64(config.seed ^ 0x5eedULL));
  const EpochDay last_date = series.dates().back();

  for (int m = 0; m < n_draws; ++m) {
    const RateTriple& rates = rate_draws[m];
    for (int rep = 0; rep < config.reps_per_draw; ++rep) {
      std::mt19937_64 gen = make_engine(config.seed, static_cast<std::uint64_t>(m),
                                        static_cast<std::uint64_t>(rep));
      double i_prev = series.infected().back();
      double s_prev = series.susceptible().back();
      for (int h = 0; h < config.h_max; ++h) {
        const double w =
            posterior.dow_enabled
                ? std::exp(posterior.dow[weekday(last_date + h + 1)])
                : 1.0;
        const double l1 = floored(
            rates.beta * w * s_prev * i_prev / series.population(), &fs.floor_flags);
        const double l2 = floored(rates.gamma * w * i_prev, &fs.floor_flags);
        const double l3 = floored(rates.nu * w * i_prev, &fs.floor_flags);
        const double dc = draw_poisson(gen, l1);
        const double drc = draw_poisson(gen, l2);
        const double dd = draw_poisson(gen, l3);
        fs.draws_c[h].push_back(dc);
        fs.draws_d[h].push_back(dd);
        i_prev = std::max(0.0, i_prev + dc - drc - dd);
        s_prev = std::max(0.0, s_prev - dc);
      }
    }
  }
  summarize(fs, config.level);
  return fs;
}

ForecastSet simulate_forecast_mf(
    const CompartmentSeries& series, const TestingSeries& testing,
    const WeeklyDeaths& weekly, const PosteriorDraws& posterior,
    const std::function<StaticParams(std::span<const double>)>& unpack,
    const ForecastConfig& config) {
  if (posterior.num_draws() == 0) throw NumericError("forecast: empty posterior");
  ForecastSet fs;
  fs.draws_c.assign(config.h_max, {});
  fs.draws_d.assign(config.h_max, {});

  const std::size_t t_last = series.size() - 1;
  const std::vector<int> use = draw_indices(posterior.num_draws(), config.max_draws);
  std::vector<double> row(posterior.draws.cols());
  for (int m : use) {
    for (int j = 0; j < posterior.draws.cols(); ++j) row[j] = posterior.draws(m, j);
    const StaticParams phi = unpack(row);
    const MfFilterResult fit = mf_filter_path(series, testing, weekly, phi);

    for (int rep = 0; rep < config.reps_per_draw; ++rep) {
      std::mt19937_64 gen = make_engine(config.seed, static_cast<std::uint64_t>(m),
                                        static_cast<std::uint64_t>(rep));
      TvpState state = fit.next_state;
      double i_prev = fit.i_star.back();
      double s_prev = fit.s_star.back();
      std::vector<double> tail = fit.tail_i_star;  // last seven I* values
      for (int h = 0; h < config.h_max; ++h) {
        const std::size_t t_abs = t_last + 1 + h;
        const RateTriple rates = state_rates(state);
        const double l1 = floored(
            rates.beta * s_prev * i_prev / series.population(), &fs.floor_flags);
        const double l2 = floored(rates.gamma * i_prev, &fs.floor_flags);
        const double dc_star = draw_poisson(gen, l1);
        const double drc_star = draw_poisson(gen, l2);
        const double dd_exp = rates.nu * i_prev;  // expected daily deaths
        fs.draws_c[h].push_back(dc_star);
        fs.draws_d[h].push_back(dd_exp);

        ScoreTriple score{};
        score.beta = (dc_star - l1) / l1;
        score.gamma = (drc_star - l2) / l2 / (1.0 - rates.gamma);
        if (t_abs % 7 == 0) {
          double sum7 = 0.0;
          const std::size_t sz = tail.size();
          for (std::size_t j = sz >= 7 ? sz - 7 : 0; j < sz; ++j) sum7 += tail[j];
          const double lam_w = floored(rates.nu * sum7, &fs.floor_flags);
          const double total = draw_poisson(gen, lam_w);
          score.nu = weekly_death_score(total, lam_w, rates.nu);
        }
        state = advance_state(state, phi, score);
        i_prev = std::max(0.0, i_prev + dc_star - drc_star - dd_exp);
        s_prev = std::max(0.0, s_prev - dc_star);
        tail.push_back(i_prev);
        if (tail.size() > 7) tail.erase(tail.begin());
      }
    }
  }
  summarize(fs, config.level);
  return fs;
}

std::vector<ForecastSet> simulate_forecast_factor(
    const Panel& panel, const PosteriorDraws& posterior,
    const std::function<FactorParams(std::span<const double>)>& unpack,
    const ForecastConfig& config) {
  if (posterior.num_draws() == 0) throw NumericError("forecast: empty posterior");
  const std::size_t kc = panel.num_countries();
  std::vector<ForecastSet> all(kc);
  for (auto& fs : all) {
    fs.draws_c.assign(config.h_max, {});
    fs.draws_d.assign(config.h_max, {});
  }

  const std::vector<int> use = draw_indices(posterior.num_draws(), config.max_draws);
  std::vector<double> row(posterior.draws.cols());
  std::vector<double> obs_c(kc), mean_c(kc);
  for (int m : use) {
    for (int j = 0; j < posterior.draws.cols(); ++j) row[j] = posterior.draws(m, j);
    const FactorParams phi = unpack(row);
    const FactorFilterResult fit = factor_filter_path(panel, phi);

    for (int rep = 0; rep < config.reps_per_draw; ++rep) {
      std::mt19937_64 gen = make_engine(config.seed, static_cast<std::uint64_t>(m),
                                        static_cast<std::uint64_t>(rep));
      std::vector<TvpState> states = fit.next_states;
      double factor = fit.next_factor;
      std::vector<double> i_prev(kc), s_prev(kc);
      for (std::size_t i = 0; i < kc; ++i) {
        // Rebuild terminal compartments from the panel (fully observed grid).
        i_prev[i] = panel.countries[i].infected().back();
        s_prev[i] = panel.countries[i].susceptible().back();
      }
      for (int h = 0; h < config.h_max; ++h) {
        std::vector<ScoreTriple> idio(kc);
        for (std::size_t i = 0; i < kc; ++i) {
          TvpState composed = states[i];
          composed.beta.level += phi.loadings[i] * factor;
          const RateTriple rates = state_rates(composed);
          const double pop = panel.countries[i].population();
          const double l1 =
              floored(rates.beta * s_prev[i] * i_prev[i] / pop, &all[i].floor_flags);
          const double l2 = floored(rates.gamma * i_prev[i], &all[i].floor_flags);
          const double l3 = floored(rates.nu * i_prev[i], &all[i].floor_flags);
          const double dc = draw_poisson(gen, l1);
          const double drc = draw_poisson(gen, l2);
          const double dd = draw_poisson(gen, l3);
          all[i].draws_c[h].push_back(dc);
          all[i].draws_d[h].push_back(dd);
          idio[i] = scaled_scores({dc, drc, dd, false, false}, {l1, l2, l3}, rates);
          obs_c[i] = dc;
          mean_c[i] = l1;
          i_prev[i] = std::max(0.0, i_prev[i] + dc - drc - dd);
          s_prev[i] = std::max(0.0, s_prev[i] - dc);
        }
        factor += phi.alpha_common * common_score(obs_c, mean_c, phi.loadings);
        for (std::size_t i = 0; i < kc; ++i)
          states[i] = advance_state(states[i], phi.country[i], idio[i]);
      }
    }
  }
  for (auto& fs : all) summarize(fs, config.level);
  return all;
}

double rmsfe(std::span<const double> forecasts, std::span<const double> realized) {
  if (forecasts.size() != realized.size() || forecasts.empty())
    throw NumericError("rmsfe: mismatched or empty inputs");
  double s = 0.0;
  for (std::size_t i = 0; i < forecasts.size(); ++i) {
    const double e = forecasts[i] - realized[i];
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(forecasts.size()));
}

DmResult dm_test(const LossSeries& losses, int horizon) {
  const std::size_t n = losses.loss_a.size();
  if (losses.loss_b.size() != n) throw NumericError("dm_test: unequal loss lengths");
  if (n < 10) throw NumericError("dm_test: need at least 10 observations");
  if (horizon < 1) throw NumericError("dm_test: horizon must be >= 1");

  std::vector<double> d(n);
  double dbar = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = losses.loss_a[i] - losses.loss_b[i];
    dbar += d[i];
  }
  const double t_obs = static_cast<double>(n);
  dbar /= t_obs;

  // Bartlett-kernel HAC variance of the loss differential at lag h-1.
  const int lag = horizon - 1;
  const auto autocov = [&](int l) {
    double s = 0.0;
    for (std::size_t i = l; i < n; ++i) s += (d[i] - dbar) * (d[i - l] - dbar);
    return s / t_obs;
  };
  double v = autocov(0);
  for (int l = 1; l <= lag; ++l)
    v += 2.0 * (1.0 - static_cast<double>(l) / (lag + 1)) * autocov(l);

  if (!(v > 0.0)) return {0.0, 1.0};  // identical losses

  const double h = static_cast<double>(horizon);
  const double harvey =
      std::sqrt((t_obs + 1.0 - 2.0 * h + h * (h - 1.0) / t_obs) / t_obs);
  const double stat = harvey * dbar / std::sqrt(v / t_obs);

  boost::math::students_t dist(t_obs - 1.0);
  const double p = 2.0 * boost::math::cdf(dist, -std::abs(stat));
  return {stat, p};
}

std::string bt_model_name(BtModel m) {
  switch (m) {
    case BtModel::Rw30: return "rw30";
    case BtModel::Rw45: return "rw45";
    case BtModel::Rw60: return "rw60";
    case BtModel::Tvp: return "tvp";
    case BtModel::TvpBeta: return "tvp-beta";
  }
  return "?";
}

std::optional<BtModel> bt_model_from_name(const std::string& name) {
  if (name == "rw30") return BtModel::Rw30;
  if (name == "rw45") return BtModel::Rw45;
  if (name == "rw60") return BtModel::Rw60;
  if (name == "tvp") return BtModel::Tvp;
  if (name == "tvp-beta") return BtModel::TvpBeta;
  return std::nullopt;
}

namespace {

std::optional<double> realized_at(const CompartmentSeries& realization,
                                  EpochDay date, const std::string& target) {
  const auto& dates = realization.dates();
  if (date < dates.front() || date > dates.back()) return std::nullopt;
  const std::size_t idx = static_cast<std::size_t>(date - dates.front());
  return target == "confirmed" ? realization.delta_c()[idx]
                               : realization.delta_d()[idx];
}

ForecastSet forecast_for_model(BtModel model, const CompartmentSeries& series,
                               const BacktestConfig& config, std::uint64_t seed) {
  ForecastConfig fc = config.forecast;
  fc.h_max = config.h_max;
  fc.seed = seed;
  switch (model) {
    case BtModel::Rw30:
    case BtModel::Rw45:
    case BtModel::Rw60: {
      const int m = model == BtModel::Rw30 ? 30 : model == BtModel::Rw45 ? 45 : 60;
      WindowConfig wc{m, true};
      const FpPosterior post = fit_rolling(series, wc, series.size() - 1);
      return simulate_forecast_fixed(series, post, fc);
    }
    case BtModel::Tvp:
    case BtModel::TvpBeta: {
      const TvpModel model_spec = make_tvp_model(series, model == BtModel::TvpBeta);
      McmcConfig mc = config.mcmc;
      mc.seed = splitmix64(seed ^ 0xabcdULL);
      const PosteriorDraws post = rwmh_within_gibbs(model_spec.lik, mc);
      const ParamMask mask = model_spec.mask;
      return simulate_forecast(
          series, post,
          [mask](std::span<const double> x) { return unpack_params(x, mask); }, fc);
    }
  }
  throw NumericError("unknown backtest model");
}

}  // namespace

BacktestResult recursive_backtest(const std::vector<Vintage>& vintages,
                                  const CompartmentSeries& realization,
                                  const BacktestConfig& config) {
  if (vintages.empty()) throw DataError("backtest: no vintages");
  BacktestResult out;

  for (std::size_t v = 0; v < vintages.size(); ++v) {
    const Vintage& vin = vintages[v];
    for (BtModel model : config.models) {
      ForecastSet fs;
      bool ok = true;
      try {
        fs = forecast_for_model(model, vin.series, config,
                                splitmix64(config.seed ^ (v * 1315423911ULL)));
      } catch (const std::exception&) {
        ok = false;  // recorded as missing for this vintage
      }
      for (int h = 1; h <= config.h_max; ++h) {
        const EpochDay target_date = vin.series.dates().back() + h;
        for (const std::string_view target : {"confirmed", "deaths"}) {
          PointRecord rec;
          rec.as_of = vin.as_of;
          rec.model = bt_model_name(model);
          rec.target = std::string(target);
          rec.horizon = h;
          rec.target_date = target_date;
          if (ok) {
            const HorizonSummary& s =
                target == "confirmed" ? fs.confirmed[h - 1] : fs.deaths[h - 1];
            rec.point = s.point_median;
            const auto realized =
                realized_at(realization, target_date, std::string(target));
            rec.realized = realized.value_or(0.0);
            rec.has_realized = realized.has_value();
          } else {
            rec.has_realized = false;
          }
          out.records.push_back(std::move(rec));
        }
      }
    }
  }

  out.table = evaluate_records(out.records, bt_model_name(config.baseline));
  return out;
}

std::vector<EvalRow> evaluate_records(const std::vector<PointRecord>& records,
                                      const std::string& baseline) {
  // Index usable records by (target, horizon, model) and by origin date.
  struct Key {
    std::string target;
    int horizon;
    std::string model;
    bool operator<(const Key& o) const {
      return std::tie(target, horizon, model) < std::tie(o.target, o.horizon, o.model);
    }
  };
  std::map<Key, std::map<std::string, const PointRecord*>> by_key;
  std::set<std::string> models;
  std::set<std::pair<std::string, int>> cells;
  for (const auto& r : records) {
    if (!r.has_realized) continue;
    by_key[{r.target, r.horizon, r.model}][r.as_of] = &r;
    models.insert(r.model);
    cells.insert({r.target, r.horizon});
  }

  std::vector<EvalRow> table;
  for (const auto& [target, horizon] : cells) {
    const auto base_it = by_key.find({target, horizon, baseline});
    for (const auto& model : models) {
      const auto it = by_key.find({target, horizon, model});
      if (it == by_key.end()) continue;
      EvalRow row;
      row.target = target;
      row.model = model;
      row.horizon = horizon;

      std::vector<double> f_model, r_model;
      for (const auto& [as_of, rec] : it->second) {
        f_model.push_back(rec->point);
        r_model.push_back(rec->realized);
      }
      row.rmsfe = rmsfe(f_model, r_model);
      row.n_origins = static_cast<int>(f_model.size());

      if (base_it != by_key.end()) {
        // Pairwise-common origins against the baseline.
        LossSeries losses;
        std::vector<double> fm, rm, fb, rb;
        for (const auto& [as_of, rec] : it->second) {
          const auto b = base_it->second.find(as_of);
          if (b == base_it->second.end()) continue;
          const double em = rec->point - rec->realized;
          const double eb = b->second->point - b->second->realized;
          losses.loss_a.push_back(em * em);
          losses.loss_b.push_back(eb * eb);
          fm.push_back(rec->point);
          rm.push_back(rec->realized);
          fb.push_back(b->second->point);
          rb.push_back(b->second->realized);
        }
        if (!losses.loss_a.empty()) {
          const double rm_model = rmsfe(fm, rm);
          const double rm_base = rmsfe(fb, rb);
          row.rrmsfe = rm_base > 0.0 ? rm_model / rm_base : 1.0;
          if (model == baseline) {
            row.dm_stat = 0.0;
            row.dm_p = 1.0;
          } else if (losses.loss_a.size() >= 10) {
            const DmResult dm = dm_test(losses, horizon);
            row.dm_stat = dm.statistic;
            row.dm_p = dm.p_value;
          } else {
            row.dm_stat = 0.0;
            row.dm_p = 1.0;  // too few common origins to test
          }
        }
      }
      table.push_back(std::move(row));
    }
  }
  return table;
}

}  // namespace sird
