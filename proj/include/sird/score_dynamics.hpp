#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sird/core_model.hpp"
#include "sird/inference.hpp"

namespace sird {

inline constexpr int kHarmonics = 3;          // weekly fundamental + 2 overtones
inline constexpr double kLevelClamp = 30.0;   // transformed-scale guard before exp

// One trigonometric pair (theta_js, theta*_js) of a seasonal component.
struct HarmonicPair {
  double c{};
  double s{};
};

// Level plus three harmonic pairs of one transformed parameter.
struct ParamState {
  double level{};
  std::array<HarmonicPair, kHarmonics> seas{};

  double seasonal() const { return seas[0].c + seas[1].c + seas[2].c; }
  double composite() const { return level + seasonal(); }
};

// Full time-varying state: one ParamState per transformed rate.
struct TvpState {
  ParamState beta, gamma, nu;
};

// Static parameter vector of the score-driven model: initial transformed
// levels, level score loadings, per-harmonic score loadings, and the optional
// reporting-decay constant k used by the mixed-frequency variant.
struct StaticParams {
  std::array<double, 3> theta_l0{};                 // beta, gamma, nu order
  std::array<double, 3> alpha{};
  std::array<std::array<double, 3>, 3> psi{};       // [param][harmonic]
  std::array<std::array<double, 3>, 3> psi_star{};
  std::optional<double> k{};
};

// Variance-scaled score triple for one period; a component is zero exactly
// when its observation equals the conditional mean, or when it is missing.
struct ScoreTriple {
  double beta{};
  double gamma{};
  double nu{};
};

// One day of observations; missing components freeze the matching score.
struct DayObs {
  double dc{};
  double drc{};
  double dd{};
  bool rc_missing{false};
  bool d_missing{false};
};

// Scores scaled by inverse Fisher information on the transformed scale:
//   s_beta  = (dC - l1) / l1
//   s_gamma = (dRc - l2) / l2 / (1 - gamma)
//   s_nu    = (dD - l3) / l3 / (1 - nu)
// Throws std::domain_error when a present observation has a nonpositive mean.
ScoreTriple scaled_scores(const DayObs& obs, const PoissonMeans& means,
                          const RateTriple& rates);

// Random-walk level update (unit autoregressive root, no intercept).
double level_step(double level_prev, double alpha, double score_prev);

// Rotation-plus-score update of the three pairs at frequencies 2*pi*j/7.
std::array<HarmonicPair, kHarmonics> seasonal_step(
    const std::array<HarmonicPair, kHarmonics>& prev,
    const std::array<double, 3>& psi, const std::array<double, 3>& psi_star,
    double score_prev);

TvpState initial_state(const StaticParams& phi);
TvpState advance_state(const TvpState& state, const StaticParams& phi,
                       const ScoreTriple& score);

// Back-transform the composite transformed parameters to rates, clamping the
// transformed values to +-kLevelClamp first. `clamped` reports whether any
// component hit the guard.
RateTriple state_rates(const TvpState& state, bool* clamped = nullptr);

struct FilterDiagnostics {
  std::uint64_t level_clamps = 0;
  std::uint64_t rate_sum_violations = 0;  // days with gamma_t + nu_t > 1
};

struct FilterResult {
  // Index t covers [0, T); entry 0 repeats the initial-state rates.
  std::vector<RateTriple> rates;
  std::vector<PoissonMeans> means;  // means[t] valid for t >= 1
  std::vector<double> infected;     // filter-side I path (expected recoveries
                                    // imputed on missing-dRc days)
  std::vector<double> susceptible;
  double loglik{};
  double loglik_c{}, loglik_rc{}, loglik_d{};  // per-component breakdown
  TvpState next_state;  // state advanced past the final observation
  ScoreTriple last_score;
  FilterDiagnostics diag;
};

// Deterministic forward pass: compose parameters, back-transform, accumulate
// the Poisson log likelihood (skipping missing components), score, update.
// Throws NumericError if the data are impossible under phi (positive count at
// zero mean).
FilterResult filter_path(const CompartmentSeries& series, const StaticParams& phi);

// Likelihood-only fast path; returns -inf instead of throwing on impossible
// configurations so samplers can reject.
double filter_loglik(const CompartmentSeries& series, const StaticParams& phi);

// Fixed-rate log likelihood over the same index range; the alpha = psi = 0
// filter reproduces this exactly.
double fp_loglik(const CompartmentSeries& series, const RateTriple& rates);

// Which parts of the static parameter vector are free. beta_only pins the
// recovery/death dynamics (their alpha and psi entries) at zero; seasonal =
// false pins every harmonic loading, which is the weekly-frequency estimation
// mode for pre-aggregated inputs. Pinned entries never enter the flat vector.
struct ParamMask {
  bool beta_only = false;
  bool seasonal = true;
  bool include_k = false;

  std::size_t dim() const {
    std::size_t d = 3 + (beta_only ? 1 : 3);
    if (seasonal) d += beta_only ? 6 : 18;
    return d + (include_k ? 1 : 0);
  }
};

// Flat-vector packing for estimation. Full layout (24 entries):
//   [0:3)  theta_l0   [3:6) alpha
//   [6:15) psi (beta harmonics 1..3, gamma, nu)
//   [15:24) psi_star (same order), then k when present.
StaticParams unpack_params(std::span<const double> x, const ParamMask& mask);
std::vector<double> pack_params(const StaticParams& phi, const ParamMask& mask);
StaticParams unpack_params(std::span<const double> x, bool beta_only,
                           bool include_k);
std::vector<double> pack_params(const StaticParams& phi, bool beta_only,
                                bool include_k);

// Posterior target for the daily score-driven model.
struct TvpModel {
  LikelihoodModel lik;
  ParamMask mask;

  StaticParams unpack(std::span<const double> x) const {
    return unpack_params(x, mask);
  }
};
// joint_psi_blocks merges the nine harmonic loadings of each symbol into one
// proposal block instead of three per-rate blocks.
TvpModel make_tvp_model(const CompartmentSeries& series, bool beta_only,
                        bool seasonal = true, bool joint_psi_blocks = false);

// Deterministic method-of-moments start for the transformed initial levels,
// computed on the first `window` observation days.
std::array<double, 3> moment_start(const CompartmentSeries& series, int window = 14);

}  // namespace sird
