#include "sird.h"

#include <cstring>
#include <memory>
#include <string>

#include <json.hpp>

#include "sird/errors.hpp"
#include "sird/forecasting.hpp"
#include "sird/inference.hpp"
#include "sird/io.hpp"
#include "sird/runner.hpp"
#include "sird/score_dynamics.hpp"

namespace {

thread_local std::string g_last_error;

int set_error(int code, const std::string& msg) {
  g_last_error = msg;
  return code;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const sird::ConfigError& e) {
    return set_error(SIRD_ERR_CONFIG, e.what());
  } catch (const sird::DataError& e) {
    return set_error(SIRD_ERR_DATA, e.what());
  } catch (const std::exception& e) {
    return set_error(SIRD_ERR_NUMERIC, e.what());
  }
}

int copy_out(const std::vector<double>& values, double* buf, long cap, long* len) {
  if (len) *len = static_cast<long>(values.size());
  if (!buf) return SIRD_OK;
  const long n = std::min<long>(cap, static_cast<long>(values.size()));
  for (long i = 0; i < n; ++i) buf[i] = values[i];
  return SIRD_OK;
}

}  // namespace

struct sird_dataset {
  sird::LoadedData data;
};

struct sird_fit {
  // Daily-family fit over one dataset; keeps what forecasting needs.
  std::shared_ptr<sird_dataset> dataset;
  sird::PosteriorDraws posterior;
  sird::ParamMask mask;
  bool mixed_frequency = false;
  std::vector<double> beta_med, gamma_med, nu_med, er_med;
};

struct sird_forecast {
  sird::ForecastSet set;
};

extern "C" {

const char* sird_version(void) { return "1.0.0"; }

const char* sird_last_error(void) { return g_last_error.c_str(); }

int sird_run(const char* command, const char* config_json) {
  if (!command || !config_json)
    return set_error(SIRD_ERR_INVALID, "null command or config");
  return guarded([&] {
    sird::run_command(command, config_json);
    return SIRD_OK;
  });
}

int sird_dataset_load_csv(const char* path, double population,
                          double start_threshold, sird_dataset** out) {
  if (!path || !out) return set_error(SIRD_ERR_INVALID, "null argument");
  return guarded([&] {
    auto ds = std::make_unique<sird_dataset>();
    ds->data = sird::load_csv(path, population, start_threshold);
    *out = ds.release();
    return SIRD_OK;
  });
}

int sird_dataset_simulate(const char* sim_spec_json, uint64_t seed,
                          sird_dataset** out) {
  if (!sim_spec_json || !out) return set_error(SIRD_ERR_INVALID, "null argument");
  return guarded([&] {
    const sird::SimSpec spec = sird::parse_sim_spec(sim_spec_json);
    auto ds = std::make_unique<sird_dataset>();
    ds->data = sird::simulate_dataset(spec, seed).data;
    *out = ds.release();
    return SIRD_OK;
  });
}

int sird_dataset_write_csv(const sird_dataset* ds, const char* path) {
  if (!ds || !path) return set_error(SIRD_ERR_INVALID, "null argument");
  return guarded([&] {
    sird::write_series_csv(path, ds->data.series,
                           ds->data.testing ? &*ds->data.testing : nullptr,
                           ds->data.weekly ? &*ds->data.weekly : nullptr);
    return SIRD_OK;
  });
}

long sird_dataset_length(const sird_dataset* ds) {
  return ds ? static_cast<long>(ds->data.series.size()) : -1;
}

int sird_dataset_column(const sird_dataset* ds, const char* column, double* buf,
                        long cap, long* len) {
  if (!ds || !column) return set_error(SIRD_ERR_INVALID, "null argument");
  return guarded([&]() -> int {
    const sird::CompartmentSeries& s = ds->data.series;
    const std::vector<double>* src = nullptr;
    if (std::strcmp(column, "delta_c") == 0) src = &s.delta_c();
    else if (std::strcmp(column, "delta_rc") == 0) src = &s.delta_rc();
    else if (std::strcmp(column, "delta_d") == 0) src = &s.delta_d();
    else if (std::strcmp(column, "infected") == 0) src = &s.infected();
    else if (std::strcmp(column, "susceptible") == 0) src = &s.susceptible();
    if (!src)
      return set_error(SIRD_ERR_INVALID, std::string("unknown column: ") + column);
    return copy_out(*src, buf, cap, len);
  });
}

void sird_dataset_free(sird_dataset* ds) { delete ds; }

int sird_fit_run(const sird_dataset* ds, const char* config_json, sird_fit** out) {
  if (!ds || !config_json || !out)
    return set_error(SIRD_ERR_INVALID, "null argument");
  return guarded([&]() -> int {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(config_json);
    } catch (const std::exception& e) {
      throw sird::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    const std::string model = doc.value("model", "tvp");
    if (model != "tvp" && model != "tvp-beta" && model != "mf")
      throw sird::ConfigError("sird_fit_run supports models tvp, tvp-beta, mf");

    sird::McmcConfig mcmc;
    if (doc.contains("mcmc")) {
      const auto& m = doc.at("mcmc");
      mcmc.n_iter = m.value("n_iter", mcmc.n_iter);
      mcmc.burn_in = m.value("burn_in", mcmc.burn_in);
      if (m.contains("chi") && !m.at("chi").is_null())
        mcmc.chi = m.at("chi").get<double>();
      mcmc.epsilon = m.value("epsilon", mcmc.epsilon);
      mcmc.adapt_start = m.value("adapt_start", mcmc.adapt_start);
      mcmc.adapt_every = m.value("adapt_every", mcmc.adapt_every);
      mcmc.proposal_dof = m.value("proposal_dof", mcmc.proposal_dof);
    }
    mcmc.seed = doc.value("seed", 0ULL);
    const bool seasonal = doc.value("seasonality", true);
    const bool joint_psi = doc.value("joint_psi_blocks", false);

    auto fit = std::make_unique<sird_fit>();
    fit->dataset = std::make_shared<sird_dataset>(*ds);
    const sird::CompartmentSeries& series = fit->dataset->data.series;

    if (model == "mf") {
      if (!fit->dataset->data.testing || !fit->dataset->data.weekly)
        throw sird::ConfigError("mf fit needs testing and weekly death data");
      const sird::MfModel spec =
          sird::make_mf_model(series, *fit->dataset->data.testing,
                              *fit->dataset->data.weekly, seasonal, joint_psi);
      fit->posterior = sird::rwmh_within_gibbs(spec.lik, mcmc);
      fit->mixed_frequency = true;
      fit->mask = spec.mask;
      const auto med = fit->posterior.column_medians();
      const sird::MfFilterResult fr =
          sird::mf_filter_path(series, *fit->dataset->data.testing,
                               *fit->dataset->data.weekly, spec.unpack(med));
      for (std::size_t t = 0; t < series.size(); ++t) {
        fit->beta_med.push_back(fr.rates[t].beta);
        fit->gamma_med.push_back(fr.rates[t].gamma);
        fit->nu_med.push_back(fr.rates[t].nu);
        const double sn = (t == 0 ? fr.s_star[0] : fr.s_star[t - 1]) / series.population();
        fit->er_med.push_back(sird::effective_reproduction(fr.rates[t], sn, 1.0));
      }
    } else {
      const sird::TvpModel spec = sird::make_tvp_model(
          series, model == "tvp-beta", seasonal, joint_psi);
      fit->mask = spec.mask;
      fit->posterior = sird::rwmh_within_gibbs(spec.lik, mcmc);
      const auto med = fit->posterior.column_medians();
      const sird::FilterResult fr = sird::filter_path(series, spec.unpack(med));
      for (std::size_t t = 0; t < series.size(); ++t) {
        fit->beta_med.push_back(fr.rates[t].beta);
        fit->gamma_med.push_back(fr.rates[t].gamma);
        fit->nu_med.push_back(fr.rates[t].nu);
        const double s_prev = t == 0 ? series.population() - series.i0()
                                     : series.susceptible()[t - 1];
        fit->er_med.push_back(sird::effective_reproduction(
            fr.rates[t], s_prev, series.population()));
      }
    }
    *out = fit.release();
    return SIRD_OK;
  });
}

long sird_fit_num_draws(const sird_fit* fit) {
  return fit ? fit->posterior.num_draws() : -1;
}

long sird_fit_num_params(const sird_fit* fit) {
  return fit ? static_cast<long>(fit->posterior.names.size()) : -1;
}

int sird_fit_param_name(const sird_fit* fit, long index, const char** name) {
  if (!fit || !name) return set_error(SIRD_ERR_INVALID, "null argument");
  if (index < 0 || index >= static_cast<long>(fit->posterior.names.size()))
    return set_error(SIRD_ERR_INVALID, "parameter index out of range");
  *name = fit->posterior.names[static_cast<std::size_t>(index)].c_str();
  return SIRD_OK;
}

int sird_fit_draws(const sird_fit* fit, long param_index, double* buf, long cap,
                   long* len) {
  if (!fit) return set_error(SIRD_ERR_INVALID, "null argument");
  if (param_index < 0 || param_index >= fit->posterior.draws.cols())
    return set_error(SIRD_ERR_INVALID, "parameter index out of range");
  return copy_out(fit->posterior.column(static_cast<int>(param_index)), buf, cap, len);
}

int sird_fit_rate_path(const sird_fit* fit, const char* which, double* buf,
                       long cap, long* len) {
  if (!fit || !which) return set_error(SIRD_ERR_INVALID, "null argument");
  const std::vector<double>* src = nullptr;
  if (std::strcmp(which, "beta") == 0) src = &fit->beta_med;
  else if (std::strcmp(which, "gamma") == 0) src = &fit->gamma_med;
  else if (std::strcmp(which, "nu") == 0) src = &fit->nu_med;
  else if (std::strcmp(which, "er") == 0) src = &fit->er_med;
  if (!src) return set_error(SIRD_ERR_INVALID, std::string("unknown path: ") + which);
  return copy_out(*src, buf, cap, len);
}

void sird_fit_free(sird_fit* fit) { delete fit; }

int sird_forecast_run(const sird_fit* fit, int h_max, int reps_per_draw,
                      uint64_t seed, sird_forecast** out) {
  if (!fit || !out) return set_error(SIRD_ERR_INVALID, "null argument");
  if (h_max < 1 || reps_per_draw < 1)
    return set_error(SIRD_ERR_INVALID, "h_max and reps_per_draw must be >= 1");
  return guarded([&] {
    sird::ForecastConfig fc;
    fc.h_max = h_max;
    fc.reps_per_draw = reps_per_draw;
    fc.seed = seed;
    auto fcast = std::make_unique<sird_forecast>();
    const sird::CompartmentSeries& series = fit->dataset->data.series;
    const sird::ParamMask mask = fit->mask;
    const auto unpack = [mask](std::span<const double> x) {
      return sird::unpack_params(x, mask);
    };
    if (fit->mixed_frequency) {
      fcast->set = sird::simulate_forecast_mf(
          series, *fit->dataset->data.testing, *fit->dataset->data.weekly,
          fit->posterior, unpack, fc);
    } else {
      fcast->set = sird::simulate_forecast(series, fit->posterior, unpack, fc);
    }
    *out = fcast.release();
    return SIRD_OK;
  });
}

int sird_forecast_values(const sird_forecast* fc, const char* target,
                         const char* field, double* buf, long cap, long* len) {
  if (!fc || !target || !field) return set_error(SIRD_ERR_INVALID, "null argument");
  const std::vector<sird::HorizonSummary>* src = nullptr;
  if (std::strcmp(target, "confirmed") == 0) src = &fc->set.confirmed;
  else if (std::strcmp(target, "deaths") == 0) src = &fc->set.deaths;
  if (!src) return set_error(SIRD_ERR_INVALID, std::string("unknown target: ") + target);
  std::vector<double> values;
  values.reserve(src->size());
  for (const auto& h : *src) {
    if (std::strcmp(field, "median") == 0) values.push_back(h.point_median);
    else if (std::strcmp(field, "mean") == 0) values.push_back(h.point_mean);
    else if (std::strcmp(field, "lo") == 0) values.push_back(h.lo);
    else if (std::strcmp(field, "hi") == 0) values.push_back(h.hi);
    else return set_error(SIRD_ERR_INVALID, std::string("unknown field: ") + field);
  }
  return copy_out(values, buf, cap, len);
}

void sird_forecast_free(sird_forecast* fc) { delete fc; }

}  // extern "C"
