#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sird/errors.hpp"
#include "sird/io.hpp"
#include "sird/runner.hpp"

using namespace sird;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("sird_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

}  // namespace

TEST_CASE("load_csv: well-formed daily file") {
  TempDir dir;
  const std::string path = dir.file("data.csv");
  write_file(path,
             "date,confirmed_daily,recovered_daily,deaths_daily\n"
             "2020-03-01,1000,0,0\n"
             "2020-03-02,50,10,1\n"
             "2020-03-03,60,12,2\n");
  const LoadedData data = load_csv(path, 1e6, 1000);
  CHECK(data.series.size() == 3);
  CHECK(data.series.i0() == 1000);
  CHECK(data.series.infected()[1] == doctest::Approx(1000 + 50 - 10 - 1));
  CHECK(data.series.infected()[2] == doctest::Approx(1039 + 60 - 12 - 2));
  CHECK_FALSE(data.testing.has_value());
}

TEST_CASE("load_csv: cumulative confirmed column is differenced") {
  TempDir dir;
  const std::string path = dir.file("cum.csv");
  write_file(path,
             "date,confirmed_cum,deaths_daily\n"
             "2020-03-01,1000,0\n"
             "2020-03-02,1010,0\n"
             "2020-03-03,1030,0\n");
  const LoadedData data = load_csv(path, 1e6, 1000);
  CHECK(data.series.delta_c()[1] == 10);
  CHECK(data.series.delta_c()[2] == 20);
  // No recovery column: every day is flagged missing.
  CHECK(data.series.rc_missing_at(1));
}

TEST_CASE("load_csv: start alignment by cumulative threshold") {
  TempDir dir;
  const std::string path = dir.file("thresh.csv");
  write_file(path,
             "date,confirmed_daily,recovered_daily,deaths_daily\n"
             "2020-02-27,300,0,0\n"
             "2020-02-28,400,5,1\n"
             "2020-02-29,400,5,1\n"
             "2020-03-01,50,10,2\n");
  const LoadedData data = load_csv(path, 1e6, 1000);
  // Cumulative reaches 1000 on Feb 29; active infections there are
  // 1100 - 10 - 2 = 1088.
  CHECK(data.series.dates().front() == parse_date("2020-02-29"));
  CHECK(data.series.i0() == doctest::Approx(1088));
  CHECK(data.series.size() == 2);
}

TEST_CASE("load_csv: validation failures") {
  TempDir dir;
  const std::string gap = dir.file("gap.csv");
  write_file(gap,
             "date,confirmed_daily,deaths_daily\n"
             "2020-03-01,1200,0\n"
             "2020-03-03,50,0\n");
  CHECK_THROWS_WITH_AS(load_csv(gap, 1e6, 1000) /* gap named in message */,
                       doctest::Contains("date gap"), DataError);

  const std::string nocol = dir.file("nocol.csv");
  write_file(nocol, "date,recovered_daily\n2020-03-01,5\n");
  CHECK_THROWS_AS(load_csv(nocol, 1e6, 1000), DataError);

  const std::string never = dir.file("never.csv");
  write_file(never,
             "date,confirmed_daily,deaths_daily\n"
             "2020-03-01,5,0\n"
             "2020-03-02,5,0\n");
  CHECK_THROWS_AS(load_csv(never, 1e6, 1000), DataError);  // below threshold
}

TEST_CASE("load_csv: negatives floored with diagnostics") {
  TempDir dir;
  const std::string path = dir.file("neg.csv");
  write_file(path,
             "date,confirmed_cum,deaths_daily\n"
             "2020-03-01,1500,0\n"
             "2020-03-02,1400,0\n"  // downward revision
             "2020-03-03,1450,1\n");
  const LoadedData data = load_csv(path, 1e6, 1000);
  CHECK(data.diag.negatives_floored == 1);
  CHECK(data.series.delta_c()[1] == 0.0);
}

TEST_CASE("load_csv: testing and weekly excess blocks") {
  TempDir dir;
  const std::string path = dir.file("mf.csv");
  std::ostringstream body;
  body << "date,confirmed_daily,recovered_daily,deaths_daily,tests,positives,"
          "excess_weekly\n";
  body << "2020-03-01,1000,0,0,10000,1000,\n";
  for (int t = 1; t <= 14; ++t) {
    body << format_date(parse_date("2020-03-01") + t) << ",50,10,2,10000,1500,";
    if (t == 7) body << "5";
    if (t == 14) body << "7";
    body << "\n";
  }
  write_file(path, body.str());
  const LoadedData data = load_csv(path, 1e6, 1000);
  REQUIRE(data.testing.has_value());
  REQUIRE(data.weekly.has_value());
  CHECK(data.testing->rho[0] == doctest::Approx(0.1));
  CHECK(data.testing->rho[3] == doctest::Approx(0.15));
  REQUIRE(data.weekly->release_days.size() == 2);
  CHECK(data.weekly->reported[0] == doctest::Approx(14.0));
  CHECK(data.weekly->total[0] == doctest::Approx(19.0));
  CHECK(data.weekly->total[1] == doctest::Approx(21.0));
}

TEST_CASE("simulate: constant rates give poisson moments and reproducibility") {
  SimSpec spec;
  spec.days = 1000;
  spec.population = 5e8;  // huge population keeps S/N ~ 1
  spec.i0 = 10000;
  const TransformedTriple tt = link_forward({0.05, 0.048, 0.002});
  spec.params.theta_l0 = {tt.beta, tt.gamma, tt.nu};  // reproduction ~ 1
  const SimulatedData a = simulate_dataset(spec, 7);
  const SimulatedData b = simulate_dataset(spec, 7);
  REQUIRE(a.data.series.size() == b.data.series.size());
  for (std::size_t t = 0; t < a.data.series.size(); ++t)
    CHECK(a.data.series.delta_c()[t] == b.data.series.delta_c()[t]);

  for (const RateTriple& r : a.true_rates) {
    CHECK(r.beta == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(r.nu == doctest::Approx(0.002).epsilon(1e-12));
  }

  // Standardized one-step residuals have unit variance under the Poisson law.
  double z2 = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 1; t < a.data.series.size(); ++t) {
    const double lam = 0.05 * a.data.series.susceptible()[t - 1] *
                       a.data.series.infected()[t - 1] /
                       a.data.series.population();
    const double z = (a.data.series.delta_c()[t] - lam) / std::sqrt(lam);
    z2 += z * z;
    ++n;
  }
  const double mean_z2 = z2 / static_cast<double>(n);
  CHECK(std::abs(mean_z2 - 1.0) < 3.0 * std::sqrt(2.0 / static_cast<double>(n)));
}

TEST_CASE("simulate -> write -> load round-trips exactly") {
  TempDir dir;
  SimSpec spec;
  spec.days = 90;
  spec.population = 1e7;
  spec.i0 = 1500;
  const TransformedTriple tt = link_forward({0.1, 0.05, 0.002});
  spec.params.theta_l0 = {tt.beta, tt.gamma, tt.nu};
  spec.params.alpha = {0.2, 0.1, 0.1};
  spec.params.k = 1.2;
  spec.rho_base = 0.12;
  spec.rho_amplitude = 0.05;
  const SimulatedData sim = simulate_dataset(spec, 19);

  const std::string path = dir.file("rt.csv");
  write_series_csv(path, sim.data.series, &*sim.data.testing, &*sim.data.weekly);
  const LoadedData back = load_csv(path, spec.population, 1000);

  REQUIRE(back.series.size() == sim.data.series.size());
  CHECK(back.series.i0() == sim.data.series.i0());
  for (std::size_t t = 0; t < back.series.size(); ++t) {
    CHECK(back.series.delta_c()[t] == sim.data.series.delta_c()[t]);
    CHECK(back.series.delta_rc()[t] == sim.data.series.delta_rc()[t]);
    CHECK(back.series.delta_d()[t] == sim.data.series.delta_d()[t]);
    CHECK(back.series.infected()[t] ==
          doctest::Approx(sim.data.series.infected()[t]).epsilon(1e-12));
    CHECK(back.testing->rho[t] ==
          doctest::Approx(sim.data.testing->rho[t]).epsilon(1e-9));
  }
  REQUIRE(back.weekly->total.size() == sim.data.weekly->total.size());
  for (std::size_t w = 0; w < back.weekly->total.size(); ++w)
    CHECK(back.weekly->total[w] == sim.data.weekly->total[w]);
}

TEST_CASE("run: fixed model on a toy file emits schema-stable artifacts") {
  TempDir dir;
  const std::string data = dir.file("toy.csv");
  write_file(data,
             "date,confirmed_daily,recovered_daily,deaths_daily\n"
             "2020-03-01,1000,0,0\n"
             "2020-03-02,50,10,1\n"
             "2020-03-03,60,12,2\n"
             "2020-03-04,55,11,1\n");
  std::ostringstream cfg;
  cfg << "{\"model\":\"fp\",\"seed\":5,\"out\":\"" << dir.file("out")
      << "\",\"fp_draws\":4000,\"data\":{\"csv\":\"" << data
      << "\",\"population\":1000000,\"start_threshold\":1000}}";
  run_command("fit", cfg.str());

  const std::string params = read_file(dir.file("out") + "/params.csv");
  const auto lines = split(params, '\n');
  CHECK(lines[0] ==
        "date,s_over_n,beta_med,beta_lo,beta_hi,gamma_med,gamma_lo,gamma_hi,"
        "nu_med,nu_lo,nu_hi,er_med,er_lo,er_hi");
  REQUIRE(lines.size() >= 4);  // header + 3 days

  // Constant rows equal to the conjugate posterior medians.
  const auto row1 = split(lines[1], ',');
  const auto row2 = split(lines[2], ',');
  CHECK(row1[2] == row2[2]);  // beta_med identical across days
  double sum_c = 50 + 60 + 55;
  double sum_expo = 0.0;
  const LoadedData check = load_csv(data, 1e6, 1000);
  for (std::size_t t = 1; t < check.series.size(); ++t)
    sum_expo += check.series.susceptible()[t - 1] * check.series.infected()[t - 1] /
                1e6;
  const GammaPosterior expected{sum_c + 1.0, sum_expo};
  CHECK(std::stod(row1[2]) ==
        doctest::Approx(expected.posterior_median()).epsilon(1e-9));

  // Every emitted reproduction-rate entry satisfies the definitional
  // identity against the same row's columns.
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto cells = split(lines[i], ',');
    const double sn = std::stod(cells[1]);
    const double er_expected =
        std::stod(cells[2]) * sn / (std::stod(cells[5]) + std::stod(cells[8]));
    CHECK(std::abs(std::stod(cells[11]) - er_expected) < 1e-9);
  }

  const std::string posterior = read_file(dir.file("out") + "/posterior.csv");
  CHECK(split(posterior, '\n')[0] == "beta,gamma,nu,log_post");
  const std::string summary = read_file(dir.file("out") + "/summary.json");
  CHECK(summary.find("\"loglik_at_posterior_median\"") != std::string::npos);
}

TEST_CASE("run: reruns with the same seed are byte-identical") {
  TempDir dir;
  // Simulate a dataset, fit the time-varying model twice, compare artifacts.
  std::ostringstream sim_cfg;
  sim_cfg << "{\"seed\":9,\"out\":\"" << dir.file("sim")
          << "\",\"sim\":{\"days\":60,\"population\":1e7,\"i0\":1500,"
             "\"params\":{\"rates\":{\"beta\":0.1,\"gamma\":0.05,\"nu\":0.002},"
             "\"alpha\":[0.2,0.1,0.1]}}}";
  run_command("simulate", sim_cfg.str());

  const auto fit_cfg = [&](const std::string& out) {
    std::ostringstream c;
    c << "{\"model\":\"tvp\",\"seed\":77,\"out\":\"" << dir.file(out)
      << "\",\"data\":{\"csv\":\"" << dir.file("sim") << "/dataset.csv\","
      << "\"population\":1e7},"
      << "\"mcmc\":{\"n_iter\":400,\"burn_in\":100,\"adapt_start\":100},"
      << "\"forecast\":{\"h_max\":4,\"max_draws\":100},"
      << "\"paths_max_draws\":100}";
    return c.str();
  };
  run_command("forecast", fit_cfg("a"));
  run_command("forecast", fit_cfg("b"));
  for (const char* name : {"params.csv", "posterior.csv", "forecast.csv"}) {
    CHECK(read_file(dir.file("a") + "/" + name) ==
          read_file(dir.file("b") + "/" + name));
  }

  // Identical simulate runs give identical datasets.
  std::ostringstream sim2;
  sim2 << "{\"seed\":9,\"out\":\"" << dir.file("sim2")
       << "\",\"sim\":{\"days\":60,\"population\":1e7,\"i0\":1500,"
          "\"params\":{\"rates\":{\"beta\":0.1,\"gamma\":0.05,\"nu\":0.002},"
          "\"alpha\":[0.2,0.1,0.1]}}}";
  run_command("simulate", sim2.str());
  CHECK(read_file(dir.file("sim") + "/dataset.csv") ==
        read_file(dir.file("sim2") + "/dataset.csv"));
}

TEST_CASE("run: config errors carry the configured exit class") {
  CHECK_THROWS_AS(run_command("fit", "{not json"), ConfigError);
  CHECK_THROWS_AS(run_command("fit", "{\"model\":\"nope\",\"data\":{\"csv\":\"x\","
                              "\"population\":1}}"),
                  ConfigError);
  CHECK_THROWS_AS(run_command("wat", "{}"), ConfigError);
  // Missing data file surfaces as a data error.
  CHECK_THROWS_AS(
      run_command("fit", "{\"model\":\"fp\",\"data\":{\"csv\":\"/nonexistent.csv\","
                         "\"population\":1000}}"),
      DataError);
}

TEST_CASE("run: tvp fit emits an identity-consistent parameter file") {
  TempDir dir;
  std::ostringstream sim_cfg;
  sim_cfg << "{\"seed\":4,\"out\":\"" << dir.file("sim")
          << "\",\"sim\":{\"days\":80,\"population\":1e7,\"i0\":1500,"
             "\"params\":{\"rates\":{\"beta\":0.11,\"gamma\":0.05,\"nu\":0.002},"
             "\"alpha\":[0.25,0.15,0.15]}}}";
  run_command("simulate", sim_cfg.str());
  std::ostringstream cfg;
  cfg << "{\"model\":\"tvp\",\"seed\":12,\"out\":\"" << dir.file("out")
      << "\",\"data\":{\"csv\":\"" << dir.file("sim") << "/dataset.csv\","
      << "\"population\":1e7},"
      << "\"mcmc\":{\"n_iter\":500,\"burn_in\":200,\"adapt_start\":100},"
      << "\"paths_max_draws\":150}";
  run_command("fit", cfg.str());

  const auto lines = split(read_file(dir.file("out") + "/params.csv"), '\n');
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto cells = split(lines[i], ',');
    const double sn = std::stod(cells[1]);
    const double er = std::stod(cells[2]) * sn /
                      (std::stod(cells[5]) + std::stod(cells[8]));
    CHECK(std::abs(std::stod(cells[11]) - er) < 1e-9);
  }
}

TEST_CASE("artifact schemas are stable (golden headers)") {
  TempDir dir;
  std::ostringstream sim_cfg;
  sim_cfg << "{\"seed\":2,\"out\":\"" << dir.file("sim")
          << "\",\"sim\":{\"days\":100,\"population\":1e7,\"i0\":1500,"
             "\"params\":{\"rates\":{\"beta\":0.11,\"gamma\":0.05,\"nu\":0.002},"
             "\"alpha\":[0.25,0.1,0.1]}}}";
  run_command("simulate", sim_cfg.str());
  CHECK(split(read_file(dir.file("sim") + "/dataset.csv"), '\n')[0] ==
        "date,confirmed_daily,recovered_daily,deaths_daily");
  CHECK(split(read_file(dir.file("sim") + "/true_params.csv"), '\n')[0] ==
        "date,beta,gamma,nu");

  std::ostringstream fc_cfg;
  fc_cfg << "{\"model\":\"tvp\",\"seed\":3,\"out\":\"" << dir.file("out")
         << "\",\"data\":{\"csv\":\"" << dir.file("sim") << "/dataset.csv\","
         << "\"population\":1e7},"
         << "\"mcmc\":{\"n_iter\":300,\"burn_in\":100,\"adapt_start\":100},"
         << "\"forecast\":{\"h_max\":3,\"max_draws\":50},\"paths_max_draws\":50}";
  run_command("forecast", fc_cfg.str());
  CHECK(split(read_file(dir.file("out") + "/forecast.csv"), '\n')[0] ==
        "horizon,target,series,point_median,point_mean,hpdi_lo,hpdi_hi");

  // Vintage directory for the evaluation artifacts.
  fs::create_directories(dir.file("vintages"));
  const LoadedData full = load_csv(dir.file("sim") + "/dataset.csv", 1e7, 1000);
  for (std::size_t len : {70u, 85u, 100u}) {
    const CompartmentSeries cut = full.series.prefix(len);
    write_series_csv(dir.file("vintages") + "/" + format_date(cut.dates().back()) +
                         ".csv",
                     cut);
  }
  std::ostringstream bt_cfg;
  bt_cfg << "{\"seed\":4,\"out\":\"" << dir.file("bt")
         << "\",\"data\":{\"population\":1e7},"
         << "\"forecast\":{\"max_draws\":50},"
         << "\"backtest\":{\"vintage_dir\":\"" << dir.file("vintages")
         << "\",\"models\":[\"rw60\",\"rw45\"],\"baseline\":\"rw60\",\"h_max\":2}}";
  run_command("backtest", bt_cfg.str());
  CHECK(split(read_file(dir.file("bt") + "/eval.csv"), '\n')[0] ==
        "target,model,horizon,rmsfe,rrmsfe,dm_stat,dm_pvalue,n_origins");
  CHECK(split(read_file(dir.file("bt") + "/forecasts_raw.csv"), '\n')[0] ==
        "as_of,model,target,horizon,target_date,point,realized,has_realized");
}
