#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace sird {

// Sampler configuration. With flat priors the log posterior equals the log
// likelihood; chi defaults to 2.38^2 / block_dim when unset.
struct McmcConfig {
  int n_iter = 20000;
  int burn_in = 5000;
  std::optional<double> chi{};
  double epsilon = 1e-8;
  int adapt_start = 500;
  int adapt_every = 100;
  double proposal_dof = 15.0;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

// A posterior target over a flat parameter vector: names, MH block structure,
// positivity constraints, a deterministic optimizer start, and the
// log-likelihood callable. Model variants supply instances of this.
struct LikelihoodModel {
  std::vector<std::string> names;
  std::vector<std::pair<std::string, std::vector<int>>> blocks;
  std::vector<int> positive;  // parameter indices constrained to (0, inf)
  std::vector<double> start;
  std::function<double(std::span<const double>)> log_lik;

  int dim() const { return static_cast<int>(names.size()); }
};

struct MleResult {
  Eigen::VectorXd mode;
  Eigen::MatrixXd cov;  // ridged inverse Hessian, symmetric positive-definite
  double loglik{};
  int iterations{};
  bool fallback{};  // optimizer failed; start values and scaled identity used
};

// Quasi-Newton (BFGS) maximization of the log likelihood from the model's
// deterministic start, with central-difference gradients and a
// finite-difference Hessian at the mode.
MleResult mle_init(const LikelihoodModel& model);

struct PosteriorDraws {
  std::vector<std::string> names;
  std::vector<std::string> block_names;
  Eigen::MatrixXd draws;  // retained iterations x dim
  std::vector<double> log_posts;
  std::vector<double> acc_rates;  // per block, in [0,1]
  Eigen::VectorXd mle_mode;
  bool mle_fallback{};

  int num_draws() const { return static_cast<int>(draws.rows()); }
  std::vector<double> column(int j) const;
  std::vector<double> column_medians() const;
};

// Adaptive random-walk Metropolis-Hastings within Gibbs over the model's
// blocks. Proposals are multivariate-t steps; after adapt_start the proposal
// covariance of each block is chi * S_M + epsilon * I with S_M the running
// empirical covariance of that block's past draws. Candidates violating a
// positivity constraint or yielding a non-finite log likelihood are rejected.
PosteriorDraws rwmh_within_gibbs(const LikelihoodModel& model,
                                 const McmcConfig& config);
PosteriorDraws rwmh_within_gibbs(const LikelihoodModel& model,
                                 const McmcConfig& config, const MleResult& init);

// Shortest contiguous interval holding `level` posterior mass (sorted-window).
std::pair<double, double> hpdi(std::vector<double> draws, double level);

double median_of(std::vector<double> values);
double quantile_of(std::vector<double> values, double q);
double mean_of(const std::vector<double>& values);
double variance_of(const std::vector<double>& values);

// Effective sample size via the initial monotone positive sequence estimator.
double effective_sample_size(const std::vector<double>& chain);

}  // namespace sird
