#pragma once

#include <span>
#include <string>
#include <vector>

#include "sird/core_model.hpp"
#include "sird/score_dynamics.hpp"

namespace sird {

// K aligned country series on a common daily grid.
struct Panel {
  std::vector<std::string> names;
  std::vector<CompartmentSeries> countries;

  static Panel build(std::vector<std::string> names,
                     std::vector<CompartmentSeries> countries);
  std::size_t num_countries() const { return countries.size(); }
  std::size_t num_days() const { return countries.front().size(); }
};

// Static parameters of the multi-country model: per-country idiosyncratic
// blocks, infection-level loadings (loadings[0] fixed at 1), the common-level
// score loading, and the fixed common initial condition.
struct FactorParams {
  std::vector<StaticParams> country;
  std::vector<double> loadings;
  double alpha_common{};
  double factor0{};  // identification: fixed, not sampled
};

// Pooled variance-scaled score of the common infection level: surprise sum
// weighted by loadings over Fisher information. Countries flagged in `skip`
// contribute to neither numerator nor denominator.
double common_score(std::span<const double> obs, std::span<const double> means,
                    std::span<const double> loadings,
                    std::span<const std::uint8_t> skip = {});

// Common-score forms for the resolution rates (loadings on gamma/nu scores);
// implemented alongside the infection form although the joint filter applies
// the factor structure to the infection rate only.
double common_score_resolution(std::span<const double> obs,
                               std::span<const double> means,
                               std::span<const double> rates,
                               std::span<const double> loadings,
                               std::span<const std::uint8_t> skip = {});

struct FactorFilterResult {
  std::vector<std::vector<RateTriple>> rates;  // [country][day]
  std::vector<double> factor_path;             // common transformed level
  double loglik{};
  std::vector<double> country_loglik;
  std::vector<TvpState> next_states;  // idiosyncratic states past the sample
  double next_factor{};
  FilterDiagnostics diag;
};

// Joint forward filter: each country's transformed infection level is
// loading * factor + idiosyncratic level + idiosyncratic seasonal; recovery
// and death dynamics are purely idiosyncratic.
FactorFilterResult factor_filter_path(const Panel& panel, const FactorParams& phi);
double factor_filter_loglik(const Panel& panel, const FactorParams& phi);

// Flat-vector layout: per country [theta_l0(3), alpha(3), psi(9), psi*(9)],
// then alpha_common, then loadings for countries 2..K.
FactorParams unpack_factor_params(std::span<const double> x, std::size_t k_countries,
                                  double factor0);
std::vector<double> pack_factor_params(const FactorParams& phi);

struct FactorModel {
  LikelihoodModel lik;
  std::size_t k_countries{};
  double factor0{};

  FactorParams unpack(std::span<const double> x) const {
    return unpack_factor_params(x, k_countries, factor0);
  }
};
// The panel reference must outlive the returned model. The common initial
// condition is pinned at the first country's method-of-moments start.
FactorModel make_factor_model(const Panel& panel);

}  // namespace sird
