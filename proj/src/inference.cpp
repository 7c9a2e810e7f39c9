#include "sird/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "sird/errors.hpp"
#include "sird/rng.hpp"

namespace sird {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::VectorXd numeric_gradient(const std::function<double(std::span<const double>)>& f,
                                 Eigen::VectorXd x) {
  const int d = static_cast<int>(x.size());
  Eigen::VectorXd g(d);
  for (int i = 0; i < d; ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(x[i]));
    const double xi = x[i];
    x[i] = xi + h;
    const double fp = f({x.data(), x.data() + d});
    x[i] = xi - h;
    const double fm = f({x.data(), x.data() + d});
    x[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

Eigen::MatrixXd numeric_hessian(const std::function<double(std::span<const double>)>& f,
                                Eigen::VectorXd x) {
  const int d = static_cast<int>(x.size());
  const double f0 = f({x.data(), x.data() + d});
  Eigen::VectorXd h(d);
  for (int i = 0; i < d; ++i) h[i] = 1e-4 * std::max(1.0, std::abs(x[i]));
  Eigen::MatrixXd hess(d, d);
  const auto eval_shift = [&](int i, double si, int j, double sj) {
    const double xi = x[i], xj = x[j];
    x[i] += si;
    x[j] += sj;
    const double v = f({x.data(), x.data() + d});
    x[i] = xi;
    x[j] = xj;
    return v;
  };
  for (int i = 0; i < d; ++i) {
    const double fp = eval_shift(i, h[i], i, 0.0);
    const double fm = eval_shift(i, -h[i], i, 0.0);
    hess(i, i) = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
    for (int j = i + 1; j < d; ++j) {
      const double fpp = eval_shift(i, h[i], j, h[j]);
      const double fpm = eval_shift(i, h[i], j, -h[j]);
      const double fmp = eval_shift(i, -h[i], j, h[j]);
      const double fmm = eval_shift(i, -h[i], j, -h[j]);
      hess(i, j) = hess(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
    }
  }
  return hess;
}

// Eigenvalue-floored inverse of the negative Hessian.
Eigen::MatrixXd ridged_inverse_neg_hessian(const Eigen::MatrixXd& hess) {
  Eigen::MatrixXd a = -0.5 * (hess + hess.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  Eigen::VectorXd ev = es.eigenvalues();
  double max_ev = ev.maxCoeff();
  if (!(max_ev > 0.0)) max_ev = 1.0;
  const double floor = std::max(1e-8, 1e-8 * max_ev);
  for (int i = 0; i < ev.size(); ++i) ev[i] = std::max(ev[i], floor);
  Eigen::MatrixXd cov = es.eigenvectors() * ev.cwiseInverse().asDiagonal() *
                        es.eigenvectors().transpose();
  return 0.5 * (cov + cov.transpose());
}

Eigen::MatrixXd safe_cholesky(Eigen::MatrixXd cov) {
  cov = 0.5 * (cov + cov.transpose());
  double ridge = 0.0;
  for (int attempt = 0; attempt < 60; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov + ridge * Eigen::MatrixXd::Identity(
                                              cov.rows(), cov.cols()));
    if (llt.info() == Eigen::Success) return llt.matrixL();
    ridge = ridge == 0.0 ? 1e-12 : ridge * 10.0;
  }
  throw NumericError("proposal covariance is not positive definite");
}

// Running mean / scatter of one block's chain, for covariance adaptation.
struct RunningCov {
  explicit RunningCov(int d)
      : n(0), mean(Eigen::VectorXd::Zero(d)), m2(Eigen::MatrixXd::Zero(d, d)) {}

  void add(const Eigen::VectorXd& x) {
    ++n;
    const Eigen::VectorXd delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean).transpose();
  }

  Eigen::MatrixXd cov() const {
    if (n < 2) return Eigen::MatrixXd::Zero(mean.size(), mean.size());
    return m2 / static_cast<double>(n - 1);
  }

  long n;
  Eigen::VectorXd mean;
  Eigen::MatrixXd m2;
};

}  // namespace

void McmcConfig::validate() const {
  if (n_iter <= 0) throw ConfigError("mcmc: n_iter must be positive");
  if (burn_in < 0 || burn_in >= n_iter)
    throw ConfigError("mcmc: burn_in must lie in [0, n_iter)");
  if (chi.has_value() && !(*chi > 0.0)) throw ConfigError("mcmc: chi must be positive");
  if (!(epsilon > 0.0)) throw ConfigError("mcmc: epsilon must be positive");
  if (adapt_start < 1) throw ConfigError("mcmc: adapt_start must be >= 1");
  if (adapt_every < 1) throw ConfigError("mcmc: adapt_every must be >= 1");
  if (!(proposal_dof > 2.0)) throw ConfigError("mcmc: proposal_dof must exceed 2");
}

MleResult mle_init(const LikelihoodModel& model) {
  const int d = model.dim();
  const auto f = model.log_lik;
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(model.start.data(), d);

  MleResult out;
  out.mode = x;
  double fx = f({x.data(), x.data() + d});
  if (!std::isfinite(fx)) {
    out.cov = 0.01 * Eigen::MatrixXd::Identity(d, d);
    out.loglik = fx;
    out.fallback = true;
    return out;
  }

  // BFGS on the negative log likelihood with backtracking line search.
  Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(d, d);
  Eigen::VectorXd g = -numeric_gradient(f, x);
  const int max_iter = 400;
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    if (g.lpNorm<Eigen::Infinity>() < 1e-5) break;
    Eigen::VectorXd dir = -hinv * g;
    if (dir.dot(g) >= 0.0) dir = -g;  // reset on loss of descent

    double step = 1.0;
    double f_new = -kInf;
    Eigen::VectorXd x_new = x;
    bool improved = false;
    for (int ls = 0; ls < 50; ++ls) {
      x_new = x + step * dir;
      f_new = f({x_new.data(), x_new.data() + d});
      if (std::isfinite(f_new) && -f_new <= -fx + 1e-4 * step * dir.dot(g)) {
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;

    Eigen::VectorXd g_new = -numeric_gradient(f, x_new);
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd ident = Eigen::MatrixXd::Identity(d, d);
      hinv = (ident - rho * s * y.transpose()) * hinv *
                 (ident - rho * y * s.transpose()) +
             rho * s * s.transpose();
    }
    x = x_new;
    fx = f_new;
    g = g_new;
  }

  out.mode = x;
  out.loglik = fx;
  out.iterations = iter;
  out.cov = ridged_inverse_neg_hessian(numeric_hessian(f, x));
  return out;
}

std::vector<double> PosteriorDraws::column(int j) const {
  std::vector<double> v(draws.rows());
  for (int i = 0; i < draws.rows(); ++i) v[i] = draws(i, j);
  return v;
}

std::vector<double> PosteriorDraws::column_medians() const {
  std::vector<double> med(draws.cols());
  for (int j = 0; j < draws.cols(); ++j) med[j] = median_of(column(j));
  return med;
}

PosteriorDraws rwmh_within_gibbs(const LikelihoodModel& model,
                                 const McmcConfig& config) {
  return rwmh_within_gibbs(model, config, mle_init(model));
}

PosteriorDraws rwmh_within_gibbs(const LikelihoodModel& model,
                                 const McmcConfig& config, const MleResult& init) {
  config.validate();
  const int d = model.dim();
  const int nb = static_cast<int>(model.blocks.size());
  const auto& f = model.log_lik;

  Eigen::VectorXd phi = init.mode;
  // Positivity-constrained entries must start inside the domain.
  for (int idx : model.positive)
    if (!(phi[idx] > 0.0)) phi[idx] = model.start[idx] > 0.0 ? model.start[idx] : 1.0;
  double lp = f({phi.data(), phi.data() + d});
  if (!std::isfinite(lp))
    throw NumericError("sampler start has non-finite log likelihood");

  // Per-block proposal roots from the matching sub-blocks of the MLE covariance.
  std::vector<Eigen::MatrixXd> chol(nb);
  std::vector<double> chi(nb);
  std::vector<RunningCov> running;
  running.reserve(nb);
  for (int b = 0; b < nb; ++b) {
    const auto& idx = model.blocks[b].second;
    const int bd = static_cast<int>(idx.size());
    Eigen::MatrixXd sub(bd, bd);
    for (int i = 0; i < bd; ++i)
      for (int j = 0; j < bd; ++j) sub(i, j) = init.cov(idx[i], idx[j]);
    chol[b] = safe_cholesky(sub);
    chi[b] = config.chi.value_or(2.38 * 2.38 / bd);
    running.emplace_back(bd);
  }

  std::mt19937_64 gen = make_engine(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::gamma_distribution<double> chi2(config.proposal_dof / 2.0, 2.0);

  const int retained = config.n_iter - config.burn_in;
  PosteriorDraws out;
  out.names = model.names;
  out.draws.resize(retained, d);
  out.log_posts.resize(retained);
  out.mle_mode = init.mode;
  out.mle_fallback = init.fallback;
  for (const auto& [name, idx] : model.blocks) out.block_names.push_back(name);

  std::vector<long> accepts(nb, 0);
  Eigen::VectorXd cand(d);

  for (int m = 0; m < config.n_iter; ++m) {
    for (int b = 0; b < nb; ++b) {
      const auto& idx = model.blocks[b].second;
      const int bd = static_cast<int>(idx.size());
      // Multivariate-t step: scaled Gaussian over a chi-square mixing draw.
      const double w = chi2(gen) / config.proposal_dof;
      Eigen::VectorXd z(bd);
      for (int i = 0; i < bd; ++i) z[i] = normal(gen);
      const Eigen::VectorXd step = chol[b] * z / std::sqrt(w);

      cand = phi;
      for (int i = 0; i < bd; ++i) cand[idx[i]] += step[i];

      bool in_domain = true;
      for (int p : model.positive) {
        if (std::find(idx.begin(), idx.end(), p) != idx.end() && !(cand[p] > 0.0)) {
          in_domain = false;
          break;
        }
      }
      if (in_domain) {
        const double lp_cand = f({cand.data(), cand.data() + d});
        if (std::isfinite(lp_cand) && std::log(unif(gen)) < lp_cand - lp) {
          phi = cand;
          lp = lp_cand;
          ++accepts[b];
        }
      }
      Eigen::VectorXd block_val(bd);
      for (int i = 0; i < bd; ++i) block_val[i] = phi[idx[i]];
      running[b].add(block_val);
    }

    const int iter_1 = m + 1;
    if (iter_1 >= config.adapt_start && iter_1 % config.adapt_every == 0) {
      for (int b = 0; b < nb; ++b) {
        const int bd = static_cast<int>(model.blocks[b].second.size());
        const Eigen::MatrixXd prop =
            chi[b] * running[b].cov() +
            config.epsilon * Eigen::MatrixXd::Identity(bd, bd);
        chol[b] = safe_cholesky(prop);
      }
    }

    if (m >= config.burn_in) {
      out.draws.row(m - config.burn_in) = phi.transpose();
      out.log_posts[m - config.burn_in] = lp;
    }
  }

  out.acc_rates.resize(nb);
  for (int b = 0; b < nb; ++b)
    out.acc_rates[b] = static_cast<double>(accepts[b]) / config.n_iter;
  return out;
}

std::pair<double, double> hpdi(std::vector<double> draws, double level) {
  if (draws.size() < 2) throw NumericError("hpdi: need at least two draws");
  if (!(level > 0.0 && level <= 1.0)) throw NumericError("hpdi: level must lie in (0,1]");
  std::sort(draws.begin(), draws.end());
  const std::size_t n = draws.size();
  const std::size_t window = std::min<std::size_t>(
      n, static_cast<std::size_t>(std::ceil(level * static_cast<double>(n))));
  std::size_t best = 0;
  double best_width = kInf;
  for (std::size_t i = 0; i + window <= n; ++i) {
    const double width = draws[i + window - 1] - draws[i];
    if (width < best_width) {
      best_width = width;
      best = i;
    }
  }
  return {draws[best], draws[best + window - 1]};
}

double median_of(std::vector<double> values) { return quantile_of(std::move(values), 0.5); }

double quantile_of(std::vector<double> values, double q) {
  if (values.empty()) throw NumericError("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * (static_cast<double>(values.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(values.size() - 1, lo + 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

double mean_of(const std::vector<double>& values) {
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double variance_of(const std::vector<double>& values) {
  const double m = mean_of(values);
  double s = 0.0;
  for (double v : values) s += (v - m) * (v - m);
  return s / static_cast<double>(values.size() - 1);
}

double effective_sample_size(const std::vector<double>& chain) {
  const std::size_t n = chain.size();
  if (n < 10) return static_cast<double>(n);
  const double mean = mean_of(chain);
  std::vector<double> centered(n);
  for (std::size_t i = 0; i < n; ++i) centered[i] = chain[i] - mean;
  double c0 = 0.0;
  for (double v : centered) c0 += v * v;
  c0 /= static_cast<double>(n);
  if (c0 <= 0.0) return static_cast<double>(n);

  const auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = lag; i < n; ++i) s += centered[i] * centered[i - lag];
    return s / static_cast<double>(n);
  };

  // Sum of autocorrelations over pairs while the pair sums stay positive
  // and monotone nonincreasing.
  double tau = 1.0;
  double prev_pair = kInf;
  for (std::size_t k = 1; k + 1 < n / 2; k += 2) {
    const double pair = (autocov(k) + autocov(k + 1)) / c0;
    if (pair <= 0.0) break;
    tau += 2.0 * std::min(pair, prev_pair);
    prev_pair = std::min(pair, prev_pair);
  }
  return static_cast<double>(n) / std::max(tau, 1.0);
}

}  // namespace sird
