#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sird/core_model.hpp"
#include "sird/factor_model.hpp"
#include "sird/fp_sird.hpp"
#include "sird/inference.hpp"
#include "sird/mixed_frequency.hpp"
#include "sird/score_dynamics.hpp"

namespace sird {

struct ForecastConfig {
  int h_max = 14;
  int reps_per_draw = 1;
  std::uint64_t seed = 0;
  int max_draws = 0;     // 0 = use every retained draw; else deterministic thinning
  double level = 0.95;   // interval mass
};

struct HorizonSummary {
  double point_median{};
  double point_mean{};
  double lo{}, hi{};
};

// Per-horizon predictive distributions of new confirmed cases and deaths.
struct ForecastSet {
  std::vector<int> horizons;
  std::vector<std::vector<double>> draws_c;  // [h-1][sample]
  std::vector<std::vector<double>> draws_d;
  std::vector<HorizonSummary> confirmed;
  std::vector<HorizonSummary> deaths;
  std::uint64_t floor_flags = 0;  // simulated means hit the 1e-8 floor
};

// Joint simulation of future observations and parameter paths from each
// posterior draw: counts are sampled from their Poisson laws, scores are
// computed from the simulated observations, and the recursions advance.
// Per-draw RNG streams derive from (seed, draw, rep).
ForecastSet simulate_forecast(
    const CompartmentSeries& series, const PosteriorDraws& posterior,
    const std::function<StaticParams(std::span<const double>)>& unpack,
    const ForecastConfig& config);

// Fixed-rate predictive simulation for the conjugate baseline; day-of-week
// multipliers (when fitted) follow the target day's weekday.
ForecastSet simulate_forecast_fixed(const CompartmentSeries& series,
                                    const FpPosterior& posterior,
                                    const ForecastConfig& config);

// Mixed-frequency variant on the inflated (total-infection) scale; the last
// observed positivity is carried forward and weekly death totals are drawn on
// release days. Daily deaths are reported as their expected values.
ForecastSet simulate_forecast_mf(const CompartmentSeries& series,
                                 const TestingSeries& testing,
                                 const WeeklyDeaths& weekly,
                                 const PosteriorDraws& posterior,
                                 const std::function<StaticParams(std::span<const double>)>& unpack,
                                 const ForecastConfig& config);

// Joint multi-country simulation; one ForecastSet per panel member.
std::vector<ForecastSet> simulate_forecast_factor(
    const Panel& panel, const PosteriorDraws& posterior,
    const std::function<FactorParams(std::span<const double>)>& unpack,
    const ForecastConfig& config);

double rmsfe(std::span<const double> forecasts, std::span<const double> realized);

// Aligned squared-error contributions of two competing forecast sequences.
struct LossSeries {
  std::vector<double> loss_a;
  std::vector<double> loss_b;
};

struct DmResult {
  double statistic{};
  double p_value{};
};

// Equal-predictive-accuracy test on the loss differential with Bartlett-kernel
// HAC variance at lag h-1 and the small-sample scaling
// sqrt((T + 1 - 2h + h(h-1)/T) / T); p-value from t(T-1). Identical losses
// return (0, 1) by convention.
DmResult dm_test(const LossSeries& losses, int horizon);

// --- recursive vintage backtest -------------------------------------------

enum class BtModel { Rw30, Rw45, Rw60, Tvp, TvpBeta };
std::string bt_model_name(BtModel m);
std::optional<BtModel> bt_model_from_name(const std::string& name);

struct Vintage {
  std::string as_of;
  CompartmentSeries series;
};

struct BacktestConfig {
  std::vector<BtModel> models{BtModel::Rw30, BtModel::Rw45, BtModel::Rw60,
                              BtModel::Tvp, BtModel::TvpBeta};
  BtModel baseline = BtModel::Tvp;
  int h_max = 7;
  McmcConfig mcmc{};
  ForecastConfig forecast{};
  std::uint64_t seed = 0;
};

// One point forecast scored against the realized value.
struct PointRecord {
  std::string as_of;
  std::string model;
  std::string target;  // "confirmed" | "deaths"
  int horizon{};
  EpochDay target_date{};
  double point{};
  double realized{};
  bool has_realized{};
};

struct EvalRow {
  std::string target;
  std::string model;
  int horizon{};
  double rmsfe{};
  double rrmsfe{};   // model RMSFE over baseline RMSFE (pairwise-common set)
  double dm_stat{};
  double dm_p{};
  int n_origins{};
};

struct BacktestResult {
  std::vector<PointRecord> records;
  std::vector<EvalRow> table;
};

// Fits every registered model on each vintage, forecasts 1..h_max, and scores
// point forecasts against the realization series (the latest snapshot).
// A model failing on a vintage is recorded as missing and excluded pairwise.
BacktestResult recursive_backtest(const std::vector<Vintage>& vintages,
                                  const CompartmentSeries& realization,
                                  const BacktestConfig& config);

// Scores an existing set of point records (the `evaluate` entry point).
std::vector<EvalRow> evaluate_records(const std::vector<PointRecord>& records,
                                      const std::string& baseline);

}  // namespace sird
