#include "sird/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sird/errors.hpp"
#include "sird/factor_model.hpp"
#include "sird/forecasting.hpp"
#include "sird/fp_sird.hpp"
#include "sird/inference.hpp"
#include "sird/io.hpp"
#include "sird/mixed_frequency.hpp"
#include "sird/rng.hpp"
#include "sird/score_dynamics.hpp"

namespace sird {

namespace {

using json = nlohmann::ordered_json;

std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

struct Config {
  std::string model = "tvp";
  std::string csv;
  double population = 0.0;
  double start_threshold = 1000.0;
  struct Country {
    std::string name, csv;
    double population{};
  };
  std::vector<Country> countries;
  McmcConfig mcmc;
  ForecastConfig forecast;
  bool seasonality = true;
  bool joint_psi_blocks = false;
  int paths_max_draws = 2000;
  int fp_draws = 10000;
  std::string out = ".";
  std::uint64_t seed = 0;
  // backtest / evaluate
  std::string vintage_dir;
  std::vector<std::string> bt_models{"rw30", "rw45", "rw60", "tvp", "tvp-beta"};
  std::string baseline = "tvp";
  int bt_h_max = 7;
  std::optional<SimSpec> sim;
  json echo;
};

Config parse_config(const std::string& config_json) {
  json doc;
  try {
    doc = json::parse(config_json);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  Config cfg;
  cfg.echo = doc;
  try {
    cfg.model = doc.value("model", cfg.model);
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.out = doc.value("out", cfg.out);
    if (doc.contains("data")) {
      const auto& d = doc.at("data");
      cfg.csv = d.value("csv", cfg.csv);
      cfg.population = d.value("population", cfg.population);
      cfg.start_threshold = d.value("start_threshold", cfg.start_threshold);
      if (d.contains("countries")) {
        for (const auto& c : d.at("countries")) {
          cfg.countries.push_back({c.at("name").get<std::string>(),
                                   c.at("csv").get<std::string>(),
                                   c.at("population").get<double>()});
        }
      }
    }
    if (doc.contains("mcmc")) {
      const auto& m = doc.at("mcmc");
      cfg.mcmc.n_iter = m.value("n_iter", cfg.mcmc.n_iter);
      cfg.mcmc.burn_in = m.value("burn_in", cfg.mcmc.burn_in);
      if (m.contains("chi") && !m.at("chi").is_null())
        cfg.mcmc.chi = m.at("chi").get<double>();
      cfg.mcmc.epsilon = m.value("epsilon", cfg.mcmc.epsilon);
      cfg.mcmc.adapt_start = m.value("adapt_start", cfg.mcmc.adapt_start);
      cfg.mcmc.adapt_every = m.value("adapt_every", cfg.mcmc.adapt_every);
      cfg.mcmc.proposal_dof = m.value("proposal_dof", cfg.mcmc.proposal_dof);
    }
    if (doc.contains("forecast")) {
      const auto& f = doc.at("forecast");
      cfg.forecast.h_max = f.value("h_max", cfg.forecast.h_max);
      cfg.forecast.reps_per_draw = f.value("reps_per_draw", cfg.forecast.reps_per_draw);
      cfg.forecast.max_draws = f.value("max_draws", cfg.forecast.max_draws);
      cfg.forecast.level = f.value("level", cfg.forecast.level);
    }
    cfg.seasonality = doc.value("seasonality", cfg.seasonality);
    cfg.joint_psi_blocks = doc.value("joint_psi_blocks", cfg.joint_psi_blocks);
    cfg.paths_max_draws = doc.value("paths_max_draws", cfg.paths_max_draws);
    cfg.fp_draws = doc.value("fp_draws", cfg.fp_draws);
    if (doc.contains("backtest")) {
      const auto& b = doc.at("backtest");
      cfg.vintage_dir = b.value("vintage_dir", cfg.vintage_dir);
      if (b.contains("models"))
        cfg.bt_models = b.at("models").get<std::vector<std::string>>();
      cfg.baseline = b.value("baseline", cfg.baseline);
      cfg.bt_h_max = b.value("h_max", cfg.bt_h_max);
    }
    if (doc.contains("sim")) cfg.sim = parse_sim_spec(doc.at("sim").dump());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  cfg.mcmc.seed = cfg.seed;
  cfg.forecast.seed = splitmix64(cfg.seed ^ 0xf0f0f0f0ULL);
  return cfg;
}

const std::vector<std::string> kModels{"fp", "tvp", "tvp-beta", "mf", "factor"};

void validate_model(const Config& cfg) {
  if (std::find(kModels.begin(), kModels.end(), cfg.model) == kModels.end())
    throw ConfigError("unknown model '" + cfg.model + "'");
  if (cfg.model == "factor") {
    if (cfg.countries.size() < 2)
      throw ConfigError("factor model needs data.countries with at least two entries");
  } else if (cfg.csv.empty()) {
    throw ConfigError("data.csv is required for model '" + cfg.model + "'");
  }
}

// --- artifact writers -------------------------------------------------------

struct PathSummary {
  // Per-day quantiles of the rate paths plus derived columns.
  std::vector<double> beta_med, beta_lo, beta_hi;
  std::vector<double> gamma_med, gamma_lo, gamma_hi;
  std::vector<double> nu_med, nu_lo, nu_hi;
  std::vector<double> s_over_n;                       // lagged susceptible share
  std::vector<double> infl_med, infl_lo, infl_hi;     // mixed-frequency only
  std::vector<double> factor_med, factor_lo, factor_hi;
};

void quantiles_from_paths(const std::vector<std::vector<double>>& per_day,
                          std::vector<double>& med, std::vector<double>& lo,
                          std::vector<double>& hi, double level) {
  const std::size_t n = per_day.size();
  med.resize(n);
  lo.resize(n);
  hi.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    med[t] = median_of(per_day[t]);
    const auto iv = hpdi(per_day[t], level);
    lo[t] = iv.first;
    hi[t] = iv.second;
  }
}

void write_params_rows(std::ostream& out, bool write_header,
                       const std::vector<EpochDay>& dates, const PathSummary& s,
                       const std::string& country = "") {
  const bool mf = !s.infl_med.empty();
  const bool factor = !s.factor_med.empty();
  if (write_header) {
    out << (factor ? "country,date" : "date")
        << ",s_over_n,beta_med,beta_lo,beta_hi,gamma_med,gamma_lo,gamma_hi,"
           "nu_med,nu_lo,nu_hi,er_med,er_lo,er_hi";
    if (mf) out << ",inflation_med,inflation_lo,inflation_hi";
    if (factor) out << ",factor_med,factor_lo,factor_hi";
    out << "\n";
  }
  const auto er = [](double b, double g, double n, double sn) {
    return b * sn / (g + n);
  };
  for (std::size_t t = 1; t < dates.size(); ++t) {
    if (factor) out << country << ',';
    out << format_date(dates[t]) << ',' << fmt_num(s.s_over_n[t]);
    out << ',' << fmt_num(s.beta_med[t]) << ',' << fmt_num(s.beta_lo[t]) << ','
        << fmt_num(s.beta_hi[t]);
    out << ',' << fmt_num(s.gamma_med[t]) << ',' << fmt_num(s.gamma_lo[t]) << ','
        << fmt_num(s.gamma_hi[t]);
    out << ',' << fmt_num(s.nu_med[t]) << ',' << fmt_num(s.nu_lo[t]) << ','
        << fmt_num(s.nu_hi[t]);
    out << ',' << fmt_num(er(s.beta_med[t], s.gamma_med[t], s.nu_med[t], s.s_over_n[t]))
        << ',' << fmt_num(er(s.beta_lo[t], s.gamma_lo[t], s.nu_lo[t], s.s_over_n[t]))
        << ',' << fmt_num(er(s.beta_hi[t], s.gamma_hi[t], s.nu_hi[t], s.s_over_n[t]));
    if (mf)
      out << ',' << fmt_num(s.infl_med[t]) << ',' << fmt_num(s.infl_lo[t]) << ','
          << fmt_num(s.infl_hi[t]);
    if (factor)
      out << ',' << fmt_num(s.factor_med[t]) << ',' << fmt_num(s.factor_lo[t]) << ','
          << fmt_num(s.factor_hi[t]);
    out << "\n";
  }
}

void write_params_csv(const std::string& path, const std::vector<EpochDay>& dates,
                      const PathSummary& s) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  write_params_rows(out, true, dates, s);
}

void write_posterior_csv(const std::string& path, const PosteriorDraws& post) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (std::size_t j = 0; j < post.names.size(); ++j)
    out << post.names[j] << ',';
  out << "log_post\n";
  for (int i = 0; i < post.num_draws(); ++i) {
    for (int j = 0; j < post.draws.cols(); ++j) out << fmt_num(post.draws(i, j)) << ',';
    out << fmt_num(post.log_posts[i]) << "\n";
  }
}

void write_forecast_csv(const std::string& path,
                        const std::vector<std::pair<std::string, const ForecastSet*>>& sets) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "horizon,target,series,point_median,point_mean,hpdi_lo,hpdi_hi\n";
  for (const auto& [name, fs] : sets) {
    for (std::size_t h = 0; h < fs->horizons.size(); ++h) {
      const auto row = [&](const char* target, const HorizonSummary& v) {
        out << fs->horizons[h] << ',' << target << ',' << name << ','
            << fmt_num(v.point_median) << ',' << fmt_num(v.point_mean) << ','
            << fmt_num(v.lo) << ',' << fmt_num(v.hi) << "\n";
      };
      row("confirmed", fs->confirmed[h]);
      row("deaths", fs->deaths[h]);
    }
  }
}

void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "target,model,horizon,rmsfe,rrmsfe,dm_stat,dm_pvalue,n_origins\n";
  for (const auto& r : rows) {
    out << r.target << ',' << r.model << ',' << r.horizon << ',' << fmt_num(r.rmsfe)
        << ',' << fmt_num(r.rrmsfe) << ',' << fmt_num(r.dm_stat) << ','
        << fmt_num(r.dm_p) << ',' << r.n_origins << "\n";
  }
}

void write_records_csv(const std::string& path, const std::vector<PointRecord>& recs) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "as_of,model,target,horizon,target_date,point,realized,has_realized\n";
  for (const auto& r : recs) {
    out << r.as_of << ',' << r.model << ',' << r.target << ',' << r.horizon << ','
        << format_date(r.target_date) << ',' << fmt_num(r.point) << ','
        << fmt_num(r.realized) << ',' << (r.has_realized ? 1 : 0) << "\n";
  }
}

std::vector<PointRecord> read_records_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open forecasts file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty forecasts file: " + path);
  std::vector<PointRecord> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 8)
      throw DataError(path + ": malformed row " + std::to_string(row));
    PointRecord r;
    r.as_of = cells[0];
    r.model = cells[1];
    r.target = cells[2];
    r.horizon = std::stoi(cells[3]);
    r.target_date = parse_date(cells[4]);
    r.point = std::stod(cells[5]);
    r.realized = std::stod(cells[6]);
    r.has_realized = cells[7] == "1";
    out.push_back(std::move(r));
  }
  return out;
}

json diag_json(const LoadDiagnostics& d) {
  return json{{"negatives_floored", d.negatives_floored},
              {"missing_excess_weeks", d.missing_excess_weeks},
              {"rho_carry_forward_days", d.rho_carry_forward},
              {"excess_weeks_floored", d.excess_floored}};
}

class SummaryWriter {
 public:
  SummaryWriter(std::string out_dir, std::string command, json echo)
      : out_dir_(std::move(out_dir)),
        start_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["config"] = std::move(echo);
  }

  json& doc() { return doc_; }

  void finish() {
    const auto elapsed = std::chrono::steady_clock::now() - start_;
    doc_["runtime_sec"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count() / 1000.0;
    write();
  }

  void fail(int code, const std::string& message) {
    doc_["error"] = json{{"code", code}, {"message", message}};
    write();
  }

 private:
  void write() const {
    std::ofstream out(std::filesystem::path(out_dir_) / "summary.json");
    if (out) out << doc_.dump(2) << "\n";
  }

  std::string out_dir_;
  json doc_;
  std::chrono::steady_clock::time_point start_;
};

// Thinned per-day rate quantiles for the daily-model family.
PathSummary tvp_path_summary(const CompartmentSeries& series,
                             const PosteriorDraws& post, const ParamMask& mask,
                             int max_draws, double level) {
  const std::size_t n = series.size();
  std::vector<std::vector<double>> b(n), g(n), v(n);
  const int total = post.num_draws();
  const int use = max_draws > 0 ? std::min(total, max_draws) : total;
  std::vector<double> row(post.draws.cols());
  for (int i = 0; i < use; ++i) {
    const int m = static_cast<int>(static_cast<long long>(i) * total / use);
    for (int j = 0; j < post.draws.cols(); ++j) row[j] = post.draws(m, j);
    const FilterResult fr = filter_path(series, unpack_params(row, mask));
    for (std::size_t t = 0; t < n; ++t) {
      b[t].push_back(fr.rates[t].beta);
      g[t].push_back(fr.rates[t].gamma);
      v[t].push_back(fr.rates[t].nu);
    }
  }
  PathSummary s;
  quantiles_from_paths(b, s.beta_med, s.beta_lo, s.beta_hi, level);
  quantiles_from_paths(g, s.gamma_med, s.gamma_lo, s.gamma_hi, level);
  quantiles_from_paths(v, s.nu_med, s.nu_lo, s.nu_hi, level);
  s.s_over_n.resize(n);
  s.s_over_n[0] = (series.population() - series.i0()) / series.population();
  for (std::size_t t = 1; t < n; ++t)
    s.s_over_n[t] = series.susceptible()[t - 1] / series.population();
  return s;
}

// --- command implementations ------------------------------------------------

void cmd_simulate(const Config& cfg, SummaryWriter& summary) {
  if (!cfg.sim) throw ConfigError("simulate: config requires a 'sim' block");
  namespace fs = std::filesystem;
  const fs::path out_dir(cfg.out);

  if (cfg.sim->factor) {
    const SimulatedPanel panel = simulate_panel(*cfg.sim, cfg.seed);
    std::ofstream truth(out_dir / "true_params.csv");
    truth << "date,country,beta,gamma,nu,factor\n";
    for (std::size_t i = 0; i < panel.names.size(); ++i) {
      write_series_csv((out_dir / (panel.names[i] + ".csv")).string(),
                       panel.data[i].series);
      const auto& dates = panel.data[i].series.dates();
      for (std::size_t t = 0; t < dates.size(); ++t) {
        const RateTriple& r = panel.true_rates[i][t];
        truth << format_date(dates[t]) << ',' << panel.names[i] << ','
              << fmt_num(r.beta) << ',' << fmt_num(r.gamma) << ',' << fmt_num(r.nu)
              << ',' << fmt_num(panel.factor_path[t]) << "\n";
      }
    }
    summary.doc()["truncated"] = panel.truncated;
    summary.doc()["countries"] = panel.names;
  } else {
    const SimulatedData sim = simulate_dataset(*cfg.sim, cfg.seed);
    write_series_csv((out_dir / "dataset.csv").string(), sim.data.series,
                     sim.data.testing ? &*sim.data.testing : nullptr,
                     sim.data.weekly ? &*sim.data.weekly : nullptr);
    std::ofstream truth(out_dir / "true_params.csv");
    truth << "date,beta,gamma,nu\n";
    const auto& dates = sim.data.series.dates();
    for (std::size_t t = 0; t < dates.size(); ++t) {
      const RateTriple& r = sim.true_rates[t];
      truth << format_date(dates[t]) << ',' << fmt_num(r.beta) << ','
            << fmt_num(r.gamma) << ',' << fmt_num(r.nu) << "\n";
    }
    summary.doc()["truncated"] = sim.truncated;
    summary.doc()["days"] = sim.data.series.size();
  }
}

void fit_and_emit(const Config& cfg, bool with_forecast, SummaryWriter& summary) {
  namespace fs = std::filesystem;
  const fs::path out_dir(cfg.out);
  validate_model(cfg);
  json& doc = summary.doc();
  doc["model"] = cfg.model;
  doc["seed"] = cfg.seed;

  if (cfg.model == "factor") {
    std::vector<std::string> names;
    std::vector<CompartmentSeries> series_list;
    for (const auto& c : cfg.countries) {
      names.push_back(c.name);
      series_list.push_back(load_csv(c.csv, c.population, cfg.start_threshold).series);
    }
    const Panel panel = Panel::build(names, std::move(series_list));
    const FactorModel model = make_factor_model(panel);
    const PosteriorDraws post = rwmh_within_gibbs(model.lik, cfg.mcmc);
    write_posterior_csv((out_dir / "posterior.csv").string(), post);

    // Per-country path quantiles from thinned joint filters.
    const std::size_t kc = panel.num_countries();
    const std::size_t n = panel.num_days();
    const int total = post.num_draws();
    const int use = cfg.paths_max_draws > 0 ? std::min(total, cfg.paths_max_draws) : total;
    std::vector<std::vector<std::vector<double>>> b(kc), g(kc), v(kc);
    for (auto& x : b) x.resize(n);
    for (auto& x : g) x.resize(n);
    for (auto& x : v) x.resize(n);
    std::vector<std::vector<double>> fpath(n);
    std::vector<double> row(post.draws.cols());
    for (int i = 0; i < use; ++i) {
      const int m = static_cast<int>(static_cast<long long>(i) * total / use);
      for (int j = 0; j < post.draws.cols(); ++j) row[j] = post.draws(m, j);
      const FactorFilterResult fr = factor_filter_path(panel, model.unpack(row));
      for (std::size_t c = 0; c < kc; ++c)
        for (std::size_t t = 0; t < n; ++t) {
          b[c][t].push_back(fr.rates[c][t].beta);
          g[c][t].push_back(fr.rates[c][t].gamma);
          v[c][t].push_back(fr.rates[c][t].nu);
        }
      for (std::size_t t = 0; t < n; ++t) fpath[t].push_back(fr.factor_path[t]);
    }
    std::ofstream params(out_dir / "params.csv");
    if (!params) throw DataError("cannot write params.csv");
    for (std::size_t c = 0; c < kc; ++c) {
      PathSummary s;
      quantiles_from_paths(b[c], s.beta_med, s.beta_lo, s.beta_hi, cfg.forecast.level);
      quantiles_from_paths(g[c], s.gamma_med, s.gamma_lo, s.gamma_hi, cfg.forecast.level);
      quantiles_from_paths(v[c], s.nu_med, s.nu_lo, s.nu_hi, cfg.forecast.level);
      quantiles_from_paths(fpath, s.factor_med, s.factor_lo, s.factor_hi,
                           cfg.forecast.level);
      const auto& cs = panel.countries[c];
      s.s_over_n.resize(n);
      s.s_over_n[0] = (cs.population() - cs.i0()) / cs.population();
      for (std::size_t t = 1; t < n; ++t)
        s.s_over_n[t] = cs.susceptible()[t - 1] / cs.population();
      write_params_rows(params, c == 0, cs.dates(), s, panel.names[c]);
    }

    const auto post_median = post.column_medians();
    doc["loglik_at_posterior_median"] =
        factor_filter_loglik(panel, model.unpack(post_median));
    json acc;
    for (std::size_t bidx = 0; bidx < post.block_names.size(); ++bidx)
      acc[post.block_names[bidx]] = post.acc_rates[bidx];
    doc["acceptance_rates"] = acc;
    doc["mle_fallback"] = post.mle_fallback;

    if (with_forecast) {
      const auto unpack = [&model](std::span<const double> x) { return model.unpack(x); };
      const std::vector<ForecastSet> fsets =
          simulate_forecast_factor(panel, post, unpack, cfg.forecast);
      std::vector<std::pair<std::string, const ForecastSet*>> named;
      for (std::size_t c = 0; c < kc; ++c) named.push_back({panel.names[c], &fsets[c]});
      write_forecast_csv((out_dir / "forecast.csv").string(), named);
    }
    return;
  }

  const LoadedData data = load_csv(cfg.csv, cfg.population, cfg.start_threshold);
  const CompartmentSeries& series = data.series;
  doc["data"] = json{{"days", series.size()},
                     {"start", format_date(series.dates().front())},
                     {"i0", series.i0()},
                     {"diagnostics", diag_json(data.diag)}};

  if (cfg.model == "fp") {
    const FpPosterior post = conjugate_posterior(series, 0, series.size() - 1);
    const std::vector<RateTriple> draws =
        sample_fp_posterior(post, cfg.fp_draws, cfg.seed);
    {
      std::ofstream pf(out_dir / "posterior.csv");
      pf << "beta,gamma,nu,log_post\n";
      for (const auto& r : draws)
        pf << fmt_num(r.beta) << ',' << fmt_num(r.gamma) << ',' << fmt_num(r.nu) << ','
           << fmt_num(fp_loglik(series, r)) << "\n";
    }
    // Constant rows at the conjugate posterior medians and draw-based bands.
    const RateTriple med = post.posterior_medians();
    std::vector<double> bs, gs, vs;
    for (const auto& r : draws) {
      bs.push_back(r.beta);
      gs.push_back(r.gamma);
      vs.push_back(r.nu);
    }
    const auto bi = hpdi(bs, cfg.forecast.level);
    const auto gi = hpdi(gs, cfg.forecast.level);
    const auto vi = hpdi(vs, cfg.forecast.level);
    const std::size_t n = series.size();
    PathSummary s;
    s.beta_med.assign(n, med.beta);
    s.beta_lo.assign(n, bi.first);
    s.beta_hi.assign(n, bi.second);
    s.gamma_med.assign(n, med.gamma);
    s.gamma_lo.assign(n, gi.first);
    s.gamma_hi.assign(n, gi.second);
    s.nu_med.assign(n, med.nu);
    s.nu_lo.assign(n, vi.first);
    s.nu_hi.assign(n, vi.second);
    s.s_over_n.resize(n);
    s.s_over_n[0] = (series.population() - series.i0()) / series.population();
    for (std::size_t t = 1; t < n; ++t)
      s.s_over_n[t] = series.susceptible()[t - 1] / series.population();
    write_params_csv((out_dir / "params.csv").string(), series.dates(), s);

    doc["loglik_at_posterior_median"] = fp_loglik(series, med);
    doc["posterior"] = json{
        {"beta", {{"shape", post.beta.shape}, {"rate", post.beta.rate}}},
        {"gamma", {{"shape", post.gamma.shape}, {"rate", post.gamma.rate}}},
        {"nu", {{"shape", post.nu.shape}, {"rate", post.nu.rate}}}};
    if (with_forecast) {
      ForecastConfig fc = cfg.forecast;
      fc.max_draws = fc.max_draws > 0 ? fc.max_draws : 2000;
      const ForecastSet fs = simulate_forecast_fixed(series, post, fc);
      write_forecast_csv((out_dir / "forecast.csv").string(), {{"default", &fs}});
    }
    return;
  }

  if (cfg.model == "mf") {
    if (!data.testing || !data.weekly)
      throw ConfigError("mf model needs tests/positives and excess_weekly columns");
    const MfModel model = make_mf_model(series, *data.testing, *data.weekly,
                                        cfg.seasonality, cfg.joint_psi_blocks);
    const PosteriorDraws post = rwmh_within_gibbs(model.lik, cfg.mcmc);
    write_posterior_csv((out_dir / "posterior.csv").string(), post);

    const std::size_t n = series.size();
    const int total = post.num_draws();
    const int use = cfg.paths_max_draws > 0 ? std::min(total, cfg.paths_max_draws) : total;
    std::vector<std::vector<double>> b(n), g(n), v(n), infl(n);
    std::vector<double> row(post.draws.cols());
    for (int i = 0; i < use; ++i) {
      const int m = static_cast<int>(static_cast<long long>(i) * total / use);
      for (int j = 0; j < post.draws.cols(); ++j) row[j] = post.draws(m, j);
      const MfFilterResult fr =
          mf_filter_path(series, *data.testing, *data.weekly, model.unpack(row));
      for (std::size_t t = 0; t < n; ++t) {
        b[t].push_back(fr.rates[t].beta);
        g[t].push_back(fr.rates[t].gamma);
        v[t].push_back(fr.rates[t].nu);
        infl[t].push_back(fr.inflation[t]);
      }
    }
    PathSummary s;
    quantiles_from_paths(b, s.beta_med, s.beta_lo, s.beta_hi, cfg.forecast.level);
    quantiles_from_paths(g, s.gamma_med, s.gamma_lo, s.gamma_hi, cfg.forecast.level);
    quantiles_from_paths(v, s.nu_med, s.nu_lo, s.nu_hi, cfg.forecast.level);
    quantiles_from_paths(infl, s.infl_med, s.infl_lo, s.infl_hi, cfg.forecast.level);
    const auto medians = post.column_medians();
    const MfFilterResult med_fit =
        mf_filter_path(series, *data.testing, *data.weekly, model.unpack(medians));
    s.s_over_n.resize(n);
    s.s_over_n[0] = med_fit.s_star[0] / series.population();
    for (std::size_t t = 1; t < n; ++t)
      s.s_over_n[t] = med_fit.s_star[t - 1] / series.population();
    write_params_csv((out_dir / "params.csv").string(), series.dates(), s);

    doc["loglik_at_posterior_median"] = med_fit.loglik;
    json acc;
    for (std::size_t bidx = 0; bidx < post.block_names.size(); ++bidx)
      acc[post.block_names[bidx]] = post.acc_rates[bidx];
    doc["acceptance_rates"] = acc;
    doc["mle_fallback"] = post.mle_fallback;
    doc["diag_filter"] = json{{"level_clamps", med_fit.diag.level_clamps},
                              {"rate_sum_violations", med_fit.diag.rate_sum_violations}};
    if (with_forecast) {
      const ParamMask mask = model.mask;
      const auto unpack = [mask](std::span<const double> x) {
        return unpack_params(x, mask);
      };
      const ForecastSet fs = simulate_forecast_mf(series, *data.testing, *data.weekly,
                                                  post, unpack, cfg.forecast);
      write_forecast_csv((out_dir / "forecast.csv").string(), {{"default", &fs}});
      doc["forecast_scale"] = "total_infections";
    }
    return;
  }

  // tvp / tvp-beta
  const bool beta_only = cfg.model == "tvp-beta";
  const TvpModel model =
      make_tvp_model(series, beta_only, cfg.seasonality, cfg.joint_psi_blocks);
  const PosteriorDraws post = rwmh_within_gibbs(model.lik, cfg.mcmc);
  write_posterior_csv((out_dir / "posterior.csv").string(), post);
  const PathSummary s = tvp_path_summary(series, post, model.mask,
                                         cfg.paths_max_draws, cfg.forecast.level);
  write_params_csv((out_dir / "params.csv").string(), series.dates(), s);

  const auto medians = post.column_medians();
  const FilterResult med_fit = filter_path(series, model.unpack(medians));
  doc["loglik_at_posterior_median"] = med_fit.loglik;
  json acc;
  for (std::size_t bidx = 0; bidx < post.block_names.size(); ++bidx)
    acc[post.block_names[bidx]] = post.acc_rates[bidx];
  doc["acceptance_rates"] = acc;
  doc["mle_fallback"] = post.mle_fallback;
  doc["diag_filter"] = json{{"level_clamps", med_fit.diag.level_clamps},
                            {"rate_sum_violations", med_fit.diag.rate_sum_violations}};

  if (with_forecast) {
    const ParamMask mask = model.mask;
    const auto unpack = [mask](std::span<const double> x) {
      return unpack_params(x, mask);
    };
    const ForecastSet fs = simulate_forecast(series, post, unpack, cfg.forecast);
    write_forecast_csv((out_dir / "forecast.csv").string(), {{"default", &fs}});
    doc["forecast_floor_flags"] = fs.floor_flags;
  }
}

void cmd_backtest(const Config& cfg, SummaryWriter& summary) {
  namespace fs = std::filesystem;
  if (cfg.vintage_dir.empty())
    throw ConfigError("backtest: config requires backtest.vintage_dir");
  if (!(cfg.population > 0.0))
    throw ConfigError("backtest: data.population is required");
  const std::vector<Vintage> vintages =
      load_vintage_dir(cfg.vintage_dir, cfg.population, cfg.start_threshold);

  BacktestConfig bt;
  bt.models.clear();
  for (const auto& name : cfg.bt_models) {
    const auto m = bt_model_from_name(name);
    if (!m) throw ConfigError("backtest: unknown model '" + name + "'");
    bt.models.push_back(*m);
  }
  const auto baseline = bt_model_from_name(cfg.baseline);
  if (!baseline) throw ConfigError("backtest: unknown baseline '" + cfg.baseline + "'");
  bt.baseline = *baseline;
  bt.h_max = cfg.bt_h_max;
  bt.mcmc = cfg.mcmc;
  bt.forecast = cfg.forecast;
  bt.seed = cfg.seed;

  const BacktestResult result =
      recursive_backtest(vintages, vintages.back().series, bt);
  write_records_csv((fs::path(cfg.out) / "forecasts_raw.csv").string(), result.records);
  write_eval_csv((fs::path(cfg.out) / "eval.csv").string(), result.table);
  summary.doc()["vintages"] = vintages.size();
  summary.doc()["models"] = cfg.bt_models;
}

void cmd_evaluate(const Config& cfg, SummaryWriter& summary) {
  namespace fs = std::filesystem;
  const auto& doc = cfg.echo;
  if (!doc.contains("evaluate"))
    throw ConfigError("evaluate: config requires an 'evaluate' block");
  const auto& ev = doc.at("evaluate");
  const std::string records_path = ev.value("forecasts_csv", "");
  if (records_path.empty())
    throw ConfigError("evaluate: evaluate.forecasts_csv is required");
  std::vector<PointRecord> records = read_records_csv(records_path);

  if (ev.contains("realized_csv")) {
    if (!(cfg.population > 0.0))
      throw ConfigError("evaluate: data.population is required with realized_csv");
    const LoadedData realized =
        load_csv(ev.at("realized_csv").get<std::string>(), cfg.population,
                 cfg.start_threshold);
    const auto& dates = realized.series.dates();
    for (auto& r : records) {
      if (r.target_date < dates.front() || r.target_date > dates.back()) {
        r.has_realized = false;
        continue;
      }
      const std::size_t idx = static_cast<std::size_t>(r.target_date - dates.front());
      r.realized = r.target == "confirmed" ? realized.series.delta_c()[idx]
                                           : realized.series.delta_d()[idx];
      r.has_realized = true;
    }
  }
  const std::string baseline = ev.value("baseline", cfg.baseline);
  write_eval_csv((fs::path(cfg.out) / "eval.csv").string(),
                 evaluate_records(records, baseline));
  summary.doc()["records"] = records.size();
  summary.doc()["baseline"] = baseline;
}

}  // namespace

void run_command(const std::string& command, const std::string& config_json) {
  const Config cfg = parse_config(config_json);
  std::error_code ec;
  std::filesystem::create_directories(cfg.out, ec);
  if (ec) throw ConfigError("cannot create output directory: " + cfg.out);

  SummaryWriter summary(cfg.out, command, cfg.echo);
  try {
    if (command == "simulate") {
      cmd_simulate(cfg, summary);
    } else if (command == "fit") {
      fit_and_emit(cfg, false, summary);
    } else if (command == "forecast") {
      fit_and_emit(cfg, true, summary);
    } else if (command == "backtest") {
      cmd_backtest(cfg, summary);
    } else if (command == "evaluate") {
      cmd_evaluate(cfg, summary);
    } else {
      throw ConfigError("unknown command '" + command + "'");
    }
  } catch (const ConfigError& e) {
    summary.fail(2, e.what());
    throw;
  } catch (const DataError& e) {
    summary.fail(3, e.what());
    throw;
  } catch (const std::exception& e) {
    summary.fail(4, e.what());
    throw;
  }
  summary.finish();
}

}  // namespace sird
