#include "sird/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "sird/errors.hpp"
#include "sird/rng.hpp"

namespace sird {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

double parse_cell(const std::string& cell, const std::string& col, std::size_t row) {
  if (cell.empty()) return kMissing;
  try {
    std::size_t pos = 0;
    const double v = std::stod(cell, &pos);
    if (pos != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw DataError("cannot parse '" + cell + "' in column " + col + " at row " +
                    std::to_string(row + 2));
  }
}

std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

LoadedData load_csv(const std::string& path, double population,
                    double start_threshold) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file: " + path);
  if (!(population > 0.0)) throw ConfigError("population must be positive");

  std::string line;
  if (!std::getline(in, line)) throw DataError("empty data file: " + path);
  const std::vector<std::string> header = split_csv_line(line);
  const auto col = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int c_date = col("date");
  const int c_daily = col("confirmed_daily");
  const int c_cum = col("confirmed_cum");
  const int c_dead = col("deaths_daily");
  const int c_rc = col("recovered_daily");
  const int c_tests = col("tests");
  const int c_pos = col("positives");
  const int c_excess = col("excess_weekly");
  if (c_date < 0) throw DataError(path + ": missing required column 'date'");
  if (c_daily < 0 && c_cum < 0)
    throw DataError(path + ": need column 'confirmed_daily' or 'confirmed_cum'");
  if (c_dead < 0) throw DataError(path + ": missing required column 'deaths_daily'");
  if ((c_tests < 0) != (c_pos < 0))
    throw DataError(path + ": 'tests' and 'positives' must appear together");

  std::vector<EpochDay> dates;
  std::vector<double> confirmed, deaths, recovered, tests, positives, excess;
  std::size_t row = 0;
  for (; std::getline(in, line); ++row) {
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    const auto cell = [&](int idx) -> std::string {
      return idx >= 0 && static_cast<std::size_t>(idx) < cells.size()
                 ? cells[idx]
                 : std::string();
    };
    dates.push_back(parse_date(cell(c_date)));
    confirmed.push_back(parse_cell(cell(c_daily >= 0 ? c_daily : c_cum),
                                   c_daily >= 0 ? "confirmed_daily" : "confirmed_cum",
                                   row));
    deaths.push_back(parse_cell(cell(c_dead), "deaths_daily", row));
    recovered.push_back(c_rc >= 0 ? parse_cell(cell(c_rc), "recovered_daily", row)
                                  : kMissing);
    if (c_tests >= 0) {
      tests.push_back(parse_cell(cell(c_tests), "tests", row));
      positives.push_back(parse_cell(cell(c_pos), "positives", row));
    }
    excess.push_back(c_excess >= 0 ? parse_cell(cell(c_excess), "excess_weekly", row)
                                   : kMissing);
  }
  const std::size_t n = dates.size();
  if (n < 2) throw DataError(path + ": need at least two data rows");
  for (std::size_t t = 1; t < n; ++t) {
    if (dates[t] <= dates[t - 1])
      throw DataError(path + ": dates not strictly increasing at row " +
                      std::to_string(t + 2));
    if (dates[t] != dates[t - 1] + 1)
      throw DataError(path + ": date gap between " + format_date(dates[t - 1]) +
                      " and " + format_date(dates[t]));
  }

  LoadDiagnostics diag;
  // Confirmed: difference a cumulative column, floor negatives.
  std::vector<double> delta_c(n);
  if (c_daily >= 0) {
    delta_c = confirmed;
  } else {
    delta_c[0] = confirmed[0];
    for (std::size_t t = 1; t < n; ++t) delta_c[t] = confirmed[t] - confirmed[t - 1];
  }
  const auto floor_counts = [&](std::vector<double>& v) {
    for (double& x : v) {
      if (std::isnan(x)) continue;
      if (x < 0.0) {
        x = 0.0;
        ++diag.negatives_floored;
      }
    }
  };
  floor_counts(delta_c);
  floor_counts(deaths);
  floor_counts(recovered);
  for (std::size_t t = 0; t < n; ++t) {
    if (std::isnan(delta_c[t]))
      throw DataError(path + ": missing confirmed count at row " + std::to_string(t + 2));
    if (std::isnan(deaths[t]))
      throw DataError(path + ": missing death count at row " + std::to_string(t + 2));
  }

  // Sample start: first day with cumulative confirmed at or above threshold.
  std::vector<double> cum_c(n), cum_rc(n), cum_d(n);
  double sc = 0, sr = 0, sd = 0;
  for (std::size_t t = 0; t < n; ++t) {
    sc += delta_c[t];
    sr += std::isnan(recovered[t]) ? 0.0 : recovered[t];
    sd += deaths[t];
    cum_c[t] = sc;
    cum_rc[t] = sr;
    cum_d[t] = sd;
  }
  std::size_t start = n;
  for (std::size_t t = 0; t < n; ++t) {
    if (cum_c[t] >= start_threshold) {
      start = t;
      break;
    }
  }
  if (start == n)
    throw DataError(path + ": cumulative confirmed never reaches the threshold " +
                    fmt_num(start_threshold));
  const double i0 = cum_c[start] - cum_rc[start] - cum_d[start];
  if (!(i0 > 0.0))
    throw DataError(path + ": no active infections at the sample start " +
                    format_date(dates[start]));

  const std::size_t m = n - start;
  std::vector<EpochDay> s_dates(dates.begin() + start, dates.end());
  std::vector<double> s_dc(delta_c.begin() + start, delta_c.end());
  std::vector<double> s_dd(deaths.begin() + start, deaths.end());
  std::vector<double> s_drc(m), s_tests, s_pos, s_excess(m);
  std::vector<std::uint8_t> s_missing(m);
  for (std::size_t t = 0; t < m; ++t) {
    const double rc = recovered[start + t];
    s_missing[t] = std::isnan(rc) ? 1 : 0;
    s_drc[t] = std::isnan(rc) ? 0.0 : rc;
    s_excess[t] = excess[start + t];
  }

  LoadedData out{CompartmentSeries::build(std::move(s_dates), std::move(s_dc),
                                          std::move(s_drc), std::move(s_dd),
                                          std::move(s_missing), population, i0),
                 std::nullopt, std::nullopt, diag};

  if (!tests.empty()) {
    s_tests.assign(tests.begin() + start, tests.end());
    s_pos.assign(positives.begin() + start, positives.end());
    for (double& v : s_tests)
      if (std::isnan(v)) v = 0.0;
    for (double& v : s_pos)
      if (std::isnan(v)) v = 0.0;
    out.testing = TestingSeries::build(std::move(s_tests), std::move(s_pos));
    out.diag.rho_carry_forward = out.testing->carry_forward_days;
  }
  if (c_excess >= 0) {
    std::vector<double> by_week;
    for (std::size_t t = 7; t < m; t += 7) {
      if (std::isnan(s_excess[t])) {
        by_week.push_back(0.0);
        ++out.diag.missing_excess_weeks;
      } else {
        by_week.push_back(s_excess[t]);
      }
    }
    out.weekly = WeeklyDeaths::build(out.series, by_week);
    out.diag.excess_floored = out.weekly->floored_weeks;
  }
  return out;
}

void write_series_csv(const std::string& path, const CompartmentSeries& series,
                      const TestingSeries* testing, const WeeklyDeaths* weekly) {
  std::ofstream outf(path);
  if (!outf) throw DataError("cannot write data file: " + path);
  outf << "date,confirmed_daily,recovered_daily,deaths_daily";
  if (testing) outf << ",tests,positives";
  if (weekly) outf << ",excess_weekly";
  outf << "\n";
  for (std::size_t t = 0; t < series.size(); ++t) {
    outf << format_date(series.dates()[t]) << ',' << fmt_num(series.delta_c()[t]) << ',';
    if (!series.rc_missing_at(t)) outf << fmt_num(series.delta_rc()[t]);
    outf << ',' << fmt_num(series.delta_d()[t]);
    if (testing)
      outf << ',' << fmt_num(testing->tests[t]) << ',' << fmt_num(testing->positives[t]);
    if (weekly) {
      outf << ',';
      std::size_t week = 0;
      if (weekly->release_at(t, &week)) outf << fmt_num(weekly->excess[week]);
    }
    outf << "\n";
  }
}

std::vector<Vintage> load_vintage_dir(const std::string& dir, double population,
                                      double start_threshold) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("vintage directory not found: " + dir);
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".csv") files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no .csv vintages in " + dir);
  std::vector<Vintage> out;
  for (const auto& f : files) {
    const std::string stem = fs::path(f).stem().string();
    parse_date(stem);  // enforce YYYY-MM-DD naming
    out.push_back({stem, load_csv(f, population, start_threshold).series});
  }
  return out;
}

namespace {

StaticParams params_from_json(const nlohmann::json& p) {
  StaticParams phi;
  if (p.contains("rates")) {
    const auto& r = p.at("rates");
    const TransformedTriple tt =
        link_forward({r.at("beta").get<double>(), r.at("gamma").get<double>(),
                      r.at("nu").get<double>()});
    phi.theta_l0 = {tt.beta, tt.gamma, tt.nu};
  }
  if (p.contains("theta_l0"))
    for (int i = 0; i < 3; ++i) phi.theta_l0[i] = p.at("theta_l0").at(i).get<double>();
  if (p.contains("alpha"))
    for (int i = 0; i < 3; ++i) phi.alpha[i] = p.at("alpha").at(i).get<double>();
  if (p.contains("psi"))
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) phi.psi[i][j] = p.at("psi").at(i).at(j).get<double>();
  if (p.contains("psi_star"))
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        phi.psi_star[i][j] = p.at("psi_star").at(i).at(j).get<double>();
  if (p.contains("k")) phi.k = p.at("k").get<double>();
  return phi;
}

}  // namespace

SimSpec parse_sim_spec(const std::string& json_text) {
  nlohmann::json s;
  try {
    s = nlohmann::json::parse(json_text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("sim spec is not valid JSON: ") + e.what());
  }
  SimSpec spec;
  try {
    if (s.contains("params")) spec.params = params_from_json(s.at("params"));
    spec.days = s.value("days", spec.days);
    spec.population = s.value("population", spec.population);
    spec.i0 = s.value("i0", spec.i0);
    if (s.contains("start_date")) spec.start_date = parse_date(s.at("start_date"));
    spec.rho_base = s.value("rho_base", spec.rho_base);
    spec.rho_amplitude = s.value("rho_amplitude", spec.rho_amplitude);
    spec.rho_period = s.value("rho_period", spec.rho_period);
    spec.daily_tests = s.value("daily_tests", spec.daily_tests);
    if (s.contains("factor")) {
      const auto& f = s.at("factor");
      FactorSimSpec fs;
      fs.names = f.at("countries").get<std::vector<std::string>>();
      fs.populations = f.at("populations").get<std::vector<double>>();
      fs.i0 = f.at("i0").get<std::vector<double>>();
      fs.loadings = f.at("loadings").get<std::vector<double>>();
      fs.factor_level = f.at("factor_level").get<double>();
      fs.factor_amplitude = f.value("factor_amplitude", 0.0);
      fs.factor_period = f.value("factor_period", 180);
      for (const auto& ip : f.at("idio")) fs.idio.push_back(params_from_json(ip));
      spec.factor = std::move(fs);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad sim spec value: ") + e.what());
  }
  return spec;
}

void SimSpec::validate() const {
  if (days < 30) throw ConfigError("sim: days must be at least 30");
  if (!(population > 0.0)) throw ConfigError("sim: population must be positive");
  if (!(i0 > 0.0) || i0 >= population)
    throw ConfigError("sim: i0 must lie in (0, population)");
  if (params.k && !(*params.k > 0.0)) throw ConfigError("sim: k must be positive");
  if (factor) {
    const auto& f = *factor;
    const std::size_t kc = f.names.size();
    if (kc < 2) throw ConfigError("sim: factor block needs at least two countries");
    if (f.populations.size() != kc || f.i0.size() != kc || f.loadings.size() != kc ||
        f.idio.size() != kc)
      throw ConfigError("sim: factor block arrays must have one entry per country");
  }
}

namespace {

double rho_at(const SimSpec& spec, int t) {
  const double raw = spec.rho_base +
                     spec.rho_amplitude *
                         std::sin(2.0 * std::numbers::pi * t / spec.rho_period);
  return std::clamp(raw, 1e-3, 0.99);
}

}  // namespace

SimulatedData simulate_dataset(const SimSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 gen = make_engine(seed);
  const bool mf = spec.params.k.has_value();
  const double k = spec.params.k.value_or(0.0);

  std::vector<EpochDay> dates{spec.start_date};
  std::vector<double> dc{spec.i0}, drc{0.0}, dd{0.0};
  std::vector<double> tests, positives;
  std::vector<double> excess_by_week;
  std::vector<RateTriple> true_rates;
  bool truncated = false;

  TvpState state = initial_state(spec.params);
  true_rates.push_back(state_rates(state));
  double i_prev = mf ? spec.i0 * std::exp(k * rho_at(spec, 0)) : spec.i0;
  double s_prev = spec.population - i_prev;
  double i_rep = spec.i0;  // reported-scale stock, caps the emitted counts
  if (mf) {
    tests.push_back(spec.daily_tests);
    positives.push_back(std::round(rho_at(spec, 0) * spec.daily_tests));
  }

  std::vector<double> tail{i_prev};     // last seven I(*) values
  double week_reported = 0.0;           // reported deaths accumulated this week

  for (int t = 1; t < spec.days; ++t) {
    if (!(i_prev > 0.0)) {
      truncated = true;
      break;
    }
    const RateTriple rates = state_rates(state);
    const double l1 = rates.beta * s_prev * i_prev / spec.population;
    const double l2 = rates.gamma * i_prev;
    const double l3 = rates.nu * i_prev;

    ScoreTriple score{};
    double rep_c, rep_rc, rep_d;
    if (!mf) {
      const double x_c = draw_poisson(gen, l1);
      // Resolved cases cannot exceed the infected stock: cap deaths first,
      // then recoveries, so the identity stays valid near extinction.
      double x_d = draw_poisson(gen, l3);
      double x_rc = draw_poisson(gen, l2);
      x_d = std::min(x_d, i_prev + x_c);
      x_rc = std::min(x_rc, i_prev + x_c - x_d);
      score = scaled_scores({x_c, x_rc, x_d, false, false}, {l1, l2, l3}, rates);
      i_prev = std::max(0.0, i_prev + x_c - x_rc - x_d);
      s_prev = std::max(0.0, s_prev - x_c);
      rep_c = x_c;
      rep_rc = x_rc;
      rep_d = x_d;
    } else {
      // Total-scale process with deterministic expected death outflow; the
      // reported series is the thinned, rounded observation.
      const double rho = rho_at(spec, t);
      const double report = std::exp(-k * rho);
      const double x_c = draw_poisson(gen, l1);
      const double d_exp = std::min(l3, i_prev + x_c);
      double x_rc = draw_poisson(gen, l2);
      x_rc = std::min(x_rc, i_prev + x_c - d_exp);
      score.beta = l1 > 0.0 ? (x_c - l1) / l1 : 0.0;
      score.gamma = l2 > 0.0 ? (x_rc - l2) / l2 / (1.0 - rates.gamma) : 0.0;

      rep_c = std::round(x_c * report);
      rep_d = std::min(std::round(d_exp * report), i_rep + rep_c);
      rep_rc = std::min(std::round(x_rc * report), i_rep + rep_c - rep_d);
      week_reported += rep_d;

      if (t % 7 == 0) {
        double sum7 = 0.0;
        const std::size_t sz = tail.size();
        for (std::size_t j = sz >= 7 ? sz - 7 : 0; j < sz; ++j) sum7 += tail[j];
        const double lam_w = rates.nu * sum7;
        const double total = draw_poisson(gen, lam_w);
        if (lam_w > 0.0) score.nu = weekly_death_score(total, lam_w, rates.nu);
        excess_by_week.push_back(std::max(0.0, total - week_reported));
        week_reported = 0.0;
      }

      i_prev = std::max(0.0, i_prev + x_c - x_rc - d_exp);
      s_prev = std::max(0.0, s_prev - x_c);
      tests.push_back(spec.daily_tests);
      positives.push_back(std::round(rho * spec.daily_tests));
    }

    tail.push_back(i_prev);
    if (tail.size() > 7) tail.erase(tail.begin());
    i_rep = i_rep + rep_c - rep_rc - rep_d;

    dates.push_back(spec.start_date + t);
    dc.push_back(rep_c);
    drc.push_back(rep_rc);
    dd.push_back(rep_d);
    state = advance_state(state, spec.params, score);
    true_rates.push_back(rates);
  }

  const std::size_t n = dates.size();
  CompartmentSeries series = CompartmentSeries::build(
      std::move(dates), std::move(dc), std::move(drc), std::move(dd),
      std::vector<std::uint8_t>(n, 0), spec.population, spec.i0);

  SimulatedData out;
  out.truncated = truncated;
  out.true_rates = std::move(true_rates);
  out.data.series = std::move(series);
  if (mf) {
    out.data.testing = TestingSeries::build(std::move(tests), std::move(positives));
    out.data.weekly = WeeklyDeaths::build(out.data.series, excess_by_week);
  }
  return out;
}

SimulatedPanel simulate_panel(const SimSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (!spec.factor) throw ConfigError("simulate_panel: factor block missing");
  const FactorSimSpec& f = *spec.factor;
  const std::size_t kc = f.names.size();
  std::mt19937_64 gen = make_engine(seed);

  SimulatedPanel out;
  out.names = f.names;
  out.true_rates.resize(kc);
  out.factor_path.resize(spec.days);

  std::vector<std::vector<double>> dc(kc), drc(kc), dd(kc);
  std::vector<double> i_prev(kc), s_prev(kc);
  for (std::size_t i = 0; i < kc; ++i) {
    dc[i] = {f.i0[i]};
    drc[i] = {0.0};
    dd[i] = {0.0};
    i_prev[i] = f.i0[i];
    s_prev[i] = f.populations[i] - f.i0[i];
  }

  for (int t = 0; t < spec.days; ++t) {
    const double factor =
        f.factor_level +
        f.factor_amplitude * std::sin(2.0 * std::numbers::pi * t / f.factor_period);
    out.factor_path[t] = factor;
    for (std::size_t i = 0; i < kc; ++i) {
      TvpState st = initial_state(f.idio[i]);
      st.beta.level += f.loadings[i] * factor;
      const RateTriple rates = state_rates(st);
      if (t == 0) {
        out.true_rates[i].push_back(rates);
        continue;
      }
      const double l1 = rates.beta * s_prev[i] * i_prev[i] / f.populations[i];
      const double l2 = rates.gamma * i_prev[i];
      const double l3 = rates.nu * i_prev[i];
      const double x_c = draw_poisson(gen, l1);
      double x_d = draw_poisson(gen, l3);
      double x_rc = draw_poisson(gen, l2);
      x_d = std::min(x_d, i_prev[i] + x_c);
      x_rc = std::min(x_rc, i_prev[i] + x_c - x_d);
      dc[i].push_back(x_c);
      drc[i].push_back(x_rc);
      dd[i].push_back(x_d);
      i_prev[i] = std::max(0.0, i_prev[i] + x_c - x_rc - x_d);
      s_prev[i] = std::max(0.0, s_prev[i] - x_c);
      out.true_rates[i].push_back(rates);
    }
  }

  for (std::size_t i = 0; i < kc; ++i) {
    const std::size_t n = dc[i].size();
    std::vector<EpochDay> dates(n);
    for (std::size_t t = 0; t < n; ++t) dates[t] = spec.start_date + static_cast<long>(t);
    LoadedData ld{CompartmentSeries::build(std::move(dates), std::move(dc[i]),
                                           std::move(drc[i]), std::move(dd[i]),
                                           std::vector<std::uint8_t>(n, 0),
                                           f.populations[i], f.i0[i]),
                  std::nullopt, std::nullopt, LoadDiagnostics{}};
    out.data.push_back(std::move(ld));
  }
  return out;
}

}  // namespace sird
