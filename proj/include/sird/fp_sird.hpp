#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "sird/core_model.hpp"

namespace sird {

// Gamma(shape, rate) posterior of one rate under a flat prior.
struct GammaPosterior {
  double shape{};
  double rate{};

  double mean() const { return shape / rate; }
  double posterior_median() const;  // exact quantile
};

struct WindowConfig {
  int window_len = 60;       // trailing days M
  bool dow_effects = false;  // multiplicative day-of-week dummies
};

// Conjugate posterior of the three rates plus optional day-of-week
// multipliers exp(dow[w]) shared by all three intensities (sum-to-zero).
struct FpPosterior {
  GammaPosterior beta, gamma, nu;
  std::array<double, 7> dow{};  // Monday-first log multipliers
  bool dow_enabled{false};
  bool converged{true};
  int newton_iters{};

  RateTriple posterior_medians() const {
    return {beta.posterior_median(), gamma.posterior_median(),
            nu.posterior_median()};
  }
};

// Conjugate Gamma posteriors on day indices [t_begin, t_end] (likelihood
// terms t >= max(t_begin, 1)). Missing-recovery days drop out of the gamma
// block. Throws NumericError when the infected exposure is zero.
FpPosterior conjugate_posterior(const CompartmentSeries& series,
                                std::size_t t_begin, std::size_t t_end);

// Direct sampling from the conjugate posteriors ("Gibbs" with independent
// blocks) over the full sample.
std::vector<RateTriple> gibbs_fixed(const CompartmentSeries& series, int n_draws,
                                    std::uint64_t seed);
std::vector<RateTriple> sample_fp_posterior(const FpPosterior& post, int n_draws,
                                            std::uint64_t seed);

// Trailing-window fit ending at t_end; with dow_effects the dummies are
// estimated by Newton iterations on the profile log likelihood (rates
// replaced by their conjugate updates at each step).
FpPosterior fit_rolling(const CompartmentSeries& series, const WindowConfig& config,
                        std::size_t t_end);

}  // namespace sird
