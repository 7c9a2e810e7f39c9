#include "sird/fp_sird.hpp"

#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <boost/math/distributions/gamma.hpp>

#include "sird/dates.hpp"
#include "sird/errors.hpp"
#include "sird/rng.hpp"

namespace sird {

double GammaPosterior::posterior_median() const {
  boost::math::gamma_distribution<double> dist(shape, 1.0 / rate);
  return boost::math::median(dist);
}

namespace {

struct WindowSums {
  double c = 0, rc = 0, d = 0;
  double expo_c = 0;   // sum of S_{t-1} I_{t-1} / N, dow-weighted
  double expo_i = 0;   // sum of I_{t-1}, dow-weighted over observed-rc days
  double expo_i_all = 0;
};

WindowSums window_sums(const CompartmentSeries& series, std::size_t t_begin,
                       std::size_t t_end, const std::array<double, 7>* dow) {
  WindowSums s;
  const double n = series.population();
  for (std::size_t t = std::max<std::size_t>(t_begin, 1); t <= t_end; ++t) {
    const double w = dow ? std::exp((*dow)[weekday(series.dates()[t])]) : 1.0;
    const double i_prev = series.infected()[t - 1];
    s.c += series.delta_c()[t];
    s.d += series.delta_d()[t];
    s.expo_c += w * series.susceptible()[t - 1] * i_prev / n;
    s.expo_i_all += w * i_prev;
    if (!series.rc_missing_at(t)) {
      s.rc += series.delta_rc()[t];
      s.expo_i += w * i_prev;
    }
  }
  return s;
}

FpPosterior posterior_from_sums(const WindowSums& s) {
  if (!(s.expo_c > 0.0) || !(s.expo_i_all > 0.0))
    throw NumericError("degenerate window: infected exposure is zero");
  FpPosterior post;
  post.beta = {s.c + 1.0, s.expo_c};
  post.gamma = {s.rc + 1.0, s.expo_i > 0.0 ? s.expo_i : s.expo_i_all};
  post.nu = {s.d + 1.0, s.expo_i_all};
  return post;
}

// Profile log likelihood of the day-of-week dummies: rates are set to their
// conditional maximizers given the dummies, then the Poisson terms summed.
double dow_profile_loglik(const CompartmentSeries& series, std::size_t t_begin,
                          std::size_t t_end, const std::array<double, 7>& dow) {
  const WindowSums s = window_sums(series, t_begin, t_end, &dow);
  const double beta = s.c > 0.0 ? s.c / s.expo_c : 1e-12;
  const double gamma = (s.rc > 0.0 && s.expo_i > 0.0) ? s.rc / s.expo_i : 1e-12;
  const double nu = s.d > 0.0 ? s.d / s.expo_i_all : 1e-12;
  const double n = series.population();

  double ll = 0.0;
  for (std::size_t t = std::max<std::size_t>(t_begin, 1); t <= t_end; ++t) {
    const double w = std::exp(dow[weekday(series.dates()[t])]);
    const double i_prev = series.infected()[t - 1];
    if (!(i_prev > 0.0)) continue;
    const double l1 = beta * w * series.susceptible()[t - 1] * i_prev / n;
    const double l2 = gamma * w * i_prev;
    const double l3 = nu * w * i_prev;
    if (l1 > 0.0) ll += poisson_logpmf(series.delta_c()[t], l1);
    if (!series.rc_missing_at(t) && l2 > 0.0)
      ll += poisson_logpmf(series.delta_rc()[t], l2);
    if (l3 > 0.0) ll += poisson_logpmf(series.delta_d()[t], l3);
  }
  return ll;
}

// Map 6 free coordinates to a sum-to-zero 7-vector (last entry balances).
std::array<double, 7> dow_from_free(const Eigen::VectorXd& u) {
  std::array<double, 7> d{};
  double sum = 0.0;
  for (int j = 0; j < 6; ++j) {
    d[j] = u[j];
    sum += u[j];
  }
  d[6] = -sum;
  return d;
}

}  // namespace

FpPosterior conjugate_posterior(const CompartmentSeries& series,
                                std::size_t t_begin, std::size_t t_end) {
  return posterior_from_sums(window_sums(series, t_begin, t_end, nullptr));
}

std::vector<RateTriple> sample_fp_posterior(const FpPosterior& post, int n_draws,
                                            std::uint64_t seed) {
  std::mt19937_64 gen = make_engine(seed);
  std::vector<RateTriple> draws(n_draws);
  const auto draw_gamma = [&gen](const GammaPosterior& g) {
    std::gamma_distribution<double> dist(g.shape, 1.0 / g.rate);
    return dist(gen);
  };
  for (int m = 0; m < n_draws; ++m) {
    draws[m].beta = draw_gamma(post.beta);
    draws[m].gamma = draw_gamma(post.gamma);
    draws[m].nu = draw_gamma(post.nu);
  }
  return draws;
}

std::vector<RateTriple> gibbs_fixed(const CompartmentSeries& series, int n_draws,
                                    std::uint64_t seed) {
  if (series.size() < 2) throw DataError("gibbs_fixed: need at least 2 days");
  return sample_fp_posterior(conjugate_posterior(series, 0, series.size() - 1),
                             n_draws, seed);
}

FpPosterior fit_rolling(const CompartmentSeries& series, const WindowConfig& config,
                        std::size_t t_end) {
  if (t_end >= series.size()) throw DataError("fit_rolling: t_end out of range");
  if (t_end < static_cast<std::size_t>(config.window_len))
    throw DataError("fit_rolling: window extends before the sample start");
  const std::size_t t_begin = t_end - static_cast<std::size_t>(config.window_len);
  if (config.dow_effects && config.window_len < 8)
    throw ConfigError("fit_rolling: day-of-week dummies need window_len >= 8");

  if (!config.dow_effects) return conjugate_posterior(series, t_begin, t_end);

  // Newton on the 6 free dummy coordinates with numeric derivatives of the
  // profile objective; damped toward gradient steps when curvature is poor.
  Eigen::VectorXd u = Eigen::VectorXd::Zero(6);
  const auto objective = [&](const Eigen::VectorXd& v) {
    return dow_profile_loglik(series, t_begin, t_end, dow_from_free(v));
  };
  const double h = 1e-4;
  bool converged = false;
  int iter = 0;
  for (; iter < 100; ++iter) {
    Eigen::VectorXd g(6);
    Eigen::MatrixXd hess(6, 6);
    const double f0 = objective(u);
    const double scale = 1.0 + std::abs(f0);
    for (int i = 0; i < 6; ++i) {
      Eigen::VectorXd up = u, um = u;
      up[i] += h;
      um[i] -= h;
      const double fp = objective(up), fm = objective(um);
      g[i] = (fp - fm) / (2.0 * h);
      hess(i, i) = (fp - 2.0 * f0 + fm) / (h * h);
      for (int j = i + 1; j < 6; ++j) {
        Eigen::VectorXd upp = u, upm = u, ump = u, umm = u;
        upp[i] += h; upp[j] += h;
        upm[i] += h; upm[j] -= h;
        ump[i] -= h; ump[j] += h;
        umm[i] -= h; umm[j] -= h;
        hess(i, j) = hess(j, i) =
            (objective(upp) - objective(upm) - objective(ump) + objective(umm)) /
            (4.0 * h * h);
      }
    }
    if (g.lpNorm<Eigen::Infinity>() < 1e-6 * scale) {
      converged = true;
      break;
    }
    Eigen::MatrixXd neg_h = -hess;
    double damping = 0.0;
    Eigen::VectorXd step;
    bool improved = false;
    for (int attempt = 0; attempt < 30; ++attempt) {
      Eigen::LLT<Eigen::MatrixXd> llt(neg_h + damping * Eigen::MatrixXd::Identity(6, 6));
      if (llt.info() == Eigen::Success) {
        step = llt.solve(g);
        if (objective(u + step) >= f0) {
          improved = true;
          break;
        }
      }
      damping = damping == 0.0 ? 1e-6 : damping * 10.0;
    }
    if (!improved) break;
    // No meaningful improvement left: the optimum is resolved to FD noise.
    if (objective(u + step) - f0 < 1e-10 * scale) {
      u += step;
      converged = true;
      break;
    }
    u += step;
  }

  std::array<double, 7> dow = dow_from_free(u);
  const WindowSums s = window_sums(series, t_begin, t_end, &dow);
  FpPosterior post = posterior_from_sums(s);
  post.dow = dow;
  post.dow_enabled = true;
  post.converged = converged;
  post.newton_iters = iter;
  return post;
}

}  // namespace sird
