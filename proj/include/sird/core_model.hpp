#pragma once

#include <cstdint>
#include <vector>

#include "sird/dates.hpp"

namespace sird {

// Structural rates of the compartment model. beta is the infection rate
// (positive), gamma and nu the daily recovery and death rates (both in (0,1)).
struct RateTriple {
  double beta{};
  double gamma{};
  double nu{};

  bool valid() const {
    return beta > 0.0 && gamma > 0.0 && gamma < 1.0 && nu > 0.0 && nu < 1.0;
  }
};

// Conditional intensities of the three daily count processes:
// lambda1 for new confirmed, lambda2 for new recoveries, lambda3 for new deaths.
struct PoissonMeans {
  double lambda1{};
  double lambda2{};
  double lambda3{};
};

// Transformed parameter triple: (ln beta, logit gamma, logit nu).
struct TransformedTriple {
  double beta{};
  double gamma{};
  double nu{};
};

// Aligned daily count panel for one country. Index 0 is the sample-start day
// that carries the initial condition i0; likelihood terms run over t >= 1.
// Derived paths obey
//   I_t = I_{t-1} + dC_t - dRc_t - dD_t   (missing dRc contributes 0)
//   S_t = S_{t-1} - dC_t,  S_0 = N - I_0.
class CompartmentSeries {
 public:
  CompartmentSeries() = default;  // empty placeholder; populate via build()

  // Validates invariants and derives the infected/susceptible paths.
  // Throws DataError on any violation (non-daily dates, negative counts,
  // negative derived compartments).
  static CompartmentSeries build(std::vector<EpochDay> dates,
                                 std::vector<double> delta_c,
                                 std::vector<double> delta_rc,
                                 std::vector<double> delta_d,
                                 std::vector<std::uint8_t> missing_rc,
                                 double population, double i0);

  std::size_t size() const { return dates_.size(); }
  const std::vector<EpochDay>& dates() const { return dates_; }
  const std::vector<double>& delta_c() const { return delta_c_; }
  const std::vector<double>& delta_rc() const { return delta_rc_; }
  const std::vector<double>& delta_d() const { return delta_d_; }
  const std::vector<std::uint8_t>& missing_rc() const { return missing_rc_; }
  const std::vector<double>& infected() const { return infected_; }
  const std::vector<double>& susceptible() const { return susceptible_; }
  double population() const { return population_; }
  double i0() const { return i0_; }

  bool rc_missing_at(std::size_t t) const { return missing_rc_[t] != 0; }

  // Truncated copy over day indices [0, len).
  CompartmentSeries prefix(std::size_t len) const;

 private:
  std::vector<EpochDay> dates_;
  std::vector<double> delta_c_, delta_rc_, delta_d_;
  std::vector<std::uint8_t> missing_rc_;
  std::vector<double> infected_, susceptible_;
  double population_{};
  double i0_{};
};

// log / logit links and their exact inverses. Throws std::domain_error when
// the input leaves the admissible region.
TransformedTriple link_forward(const RateTriple& raw);
RateTriple link_backward(const TransformedTriple& transformed);

// lambda1 = beta * S * I / N, lambda2 = gamma * I, lambda3 = nu * I.
PoissonMeans poisson_means(const RateTriple& rates, double i_prev, double s_prev,
                           double n);

// Poisson log-density with the continuous Gamma-function extension, so that
// non-integer counts (inflated series) are admissible. mean must be > 0.
double poisson_logpmf(double count, double mean);

// One-step conditional mean and variance of I_t given I_{t-1} = i_prev:
// the difference of three independent Poisson counts.
struct MomentPair {
  double mean{};
  double variance{};
};
MomentPair skellam_conditional_moments(const RateTriple& rates, double i_prev,
                                       double s_prev, double n);

// t-step moments of I_t in the S/N ~ 1 regime, with
// pi = 1 + beta * (1 - 1/R0) and R0 = beta / (gamma + nu):
//   E[I_t]   = pi^t * I_0
//   Var(I_t) = beta * (1 + 1/R0) * pi^(t-1) * (1 - pi^t) / (1 - pi) * I_0
// At pi == 1 the variance takes its limit beta * (1 + 1/R0) * t * I_0.
MomentPair unconditional_moments(const RateTriple& rates, double i0, int t);

// beta * (S/N) / (gamma + nu); the basic reproduction rate at S = N.
double effective_reproduction(const RateTriple& rates, double s, double n);

}  // namespace sird
