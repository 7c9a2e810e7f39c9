#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sird/core_model.hpp"
#include "sird/forecasting.hpp"
#include "sird/mixed_frequency.hpp"
#include "sird/score_dynamics.hpp"

namespace sird {

struct LoadDiagnostics {
  std::uint64_t negatives_floored = 0;
  std::uint64_t missing_excess_weeks = 0;
  std::uint64_t rho_carry_forward = 0;
  std::uint64_t excess_floored = 0;
};

struct LoadedData {
  CompartmentSeries series;
  std::optional<TestingSeries> testing;
  std::optional<WeeklyDeaths> weekly;
  LoadDiagnostics diag;
};

// Reads a daily CSV with header columns
//   date, confirmed_daily (or confirmed_cum), deaths_daily   [required]
//   recovered_daily, tests, positives, excess_weekly          [optional]
// Dates must be consecutive ISO-8601 days. Cumulative columns are
// differenced; negative daily counts are floored at zero (diagnosed). The
// sample starts on the first day with cumulative confirmed >= threshold and
// the initial active infections are taken from the cumulative identity there.
LoadedData load_csv(const std::string& path, double population,
                    double start_threshold = 1000.0);

// Inverse of load_csv for simulated datasets (one row per day, day 0 carries
// the initial condition).
void write_series_csv(const std::string& path, const CompartmentSeries& series,
                      const TestingSeries* testing = nullptr,
                      const WeeklyDeaths* weekly = nullptr);

// Dated snapshots "YYYY-MM-DD.csv" in a directory, ordered by as-of date.
std::vector<Vintage> load_vintage_dir(const std::string& dir, double population,
                                      double start_threshold = 1000.0);

// --- synthetic data --------------------------------------------------------

struct FactorSimSpec {
  std::vector<std::string> names;
  std::vector<double> populations;
  std::vector<double> i0;
  std::vector<double> loadings;          // loadings[0] = 1 by convention
  double factor_level{};                 // transformed infection level
  double factor_amplitude{};
  int factor_period = 180;
  std::vector<StaticParams> idio;        // constant idiosyncratic components
};

struct SimSpec {
  StaticParams params;
  int days = 200;
  double population = 1e7;
  double i0 = 1000;
  EpochDay start_date = days_from_civil(2020, 3, 1);
  // Mixed-frequency block: enabled when params.k is set; the positivity path
  // is rho_base + rho_amplitude * sin(2*pi*t / rho_period), clamped to (0,1).
  double rho_base = 0.1;
  double rho_amplitude = 0.0;
  int rho_period = 120;
  double daily_tests = 100000.0;
  std::optional<FactorSimSpec> factor;

  void validate() const;  // throws ConfigError
};

struct SimulatedData {
  LoadedData data;
  std::vector<RateTriple> true_rates;  // rates in force at each day
  bool truncated = false;              // epidemic died out before `days`
};

// Forward simulation from the exact model law: Poisson draws at the filtered
// means with the score recursions advanced on the simulated observations.
SimulatedData simulate_dataset(const SimSpec& spec, std::uint64_t seed);

// Parses the "sim" configuration block (JSON text). Static parameters may be
// given on the transformed scale ("theta_l0") or directly as "rates".
SimSpec parse_sim_spec(const std::string& json_text);

struct SimulatedPanel {
  std::vector<std::string> names;
  std::vector<LoadedData> data;
  std::vector<std::vector<RateTriple>> true_rates;
  std::vector<double> factor_path;
  bool truncated = false;
};

// Multi-country panel with a deterministic sinusoidal common infection level
// loaded per country; recovery and death rates stay idiosyncratic constants.
SimulatedPanel simulate_panel(const SimSpec& spec, std::uint64_t seed);

}  // namespace sird
