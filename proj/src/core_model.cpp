#include "sird/core_model.hpp"

#include <cmath>
#include <string>

#include "sird/errors.hpp"

namespace sird {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw DataError(msg);
}

}  // namespace

CompartmentSeries CompartmentSeries::build(std::vector<EpochDay> dates,
                                           std::vector<double> delta_c,
                                           std::vector<double> delta_rc,
                                           std::vector<double> delta_d,
                                           std::vector<std::uint8_t> missing_rc,
                                           double population, double i0) {
  const std::size_t n = dates.size();
  require(n >= 1, "series must contain at least one day");
  require(delta_c.size() == n && delta_rc.size() == n && delta_d.size() == n &&
              missing_rc.size() == n,
          "series columns must have equal length");
  require(population > 0.0, "population must be positive");
  require(i0 >= 0.0, "initial infections must be nonnegative");
  require(i0 <= population, "initial infections exceed population");

  for (std::size_t t = 1; t < n; ++t) {
    if (dates[t] != dates[t - 1] + 1) {
      throw DataError("dates must be consecutive days; gap after " +
                      format_date(dates[t - 1]) + " (next is " +
                      format_date(dates[t]) + ")");
    }
  }
  for (std::size_t t = 0; t < n; ++t) {
    require(delta_c[t] >= 0.0 && delta_rc[t] >= 0.0 && delta_d[t] >= 0.0,
            "daily counts must be nonnegative (day " + format_date(dates[t]) + ")");
    if (missing_rc[t]) delta_rc[t] = 0.0;
  }

  CompartmentSeries out;
  out.infected_.resize(n);
  out.susceptible_.resize(n);
  out.infected_[0] = i0;
  out.susceptible_[0] = population - i0;
  for (std::size_t t = 1; t < n; ++t) {
    out.infected_[t] =
        out.infected_[t - 1] + delta_c[t] - delta_rc[t] - delta_d[t];
    out.susceptible_[t] = out.susceptible_[t - 1] - delta_c[t];
    require(out.infected_[t] >= 0.0,
            "active infections become negative on " + format_date(dates[t]));
    require(out.susceptible_[t] >= 0.0,
            "susceptibles become negative on " + format_date(dates[t]));
  }

  out.dates_ = std::move(dates);
  out.delta_c_ = std::move(delta_c);
  out.delta_rc_ = std::move(delta_rc);
  out.delta_d_ = std::move(delta_d);
  out.missing_rc_ = std::move(missing_rc);
  out.population_ = population;
  out.i0_ = i0;
  return out;
}

CompartmentSeries CompartmentSeries::prefix(std::size_t len) const {
  if (len > size()) len = size();
  return build(std::vector<EpochDay>(dates_.begin(), dates_.begin() + len),
               std::vector<double>(delta_c_.begin(), delta_c_.begin() + len),
               std::vector<double>(delta_rc_.begin(), delta_rc_.begin() + len),
               std::vector<double>(delta_d_.begin(), delta_d_.begin() + len),
               std::vector<std::uint8_t>(missing_rc_.begin(),
                                         missing_rc_.begin() + len),
               population_, i0_);
}

TransformedTriple link_forward(const RateTriple& raw) {
  if (!(raw.beta > 0.0)) throw std::domain_error("link: beta must be positive");
  if (!(raw.gamma > 0.0 && raw.gamma < 1.0))
    throw std::domain_error("link: gamma must lie in (0,1)");
  if (!(raw.nu > 0.0 && raw.nu < 1.0))
    throw std::domain_error("link: nu must lie in (0,1)");
  return {std::log(raw.beta), std::log(raw.gamma / (1.0 - raw.gamma)),
          std::log(raw.nu / (1.0 - raw.nu))};
}

RateTriple link_backward(const TransformedTriple& transformed) {
  const auto logistic = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  return {std::exp(transformed.beta), logistic(transformed.gamma),
          logistic(transformed.nu)};
}

PoissonMeans poisson_means(const RateTriple& rates, double i_prev, double s_prev,
                           double n) {
  return {rates.beta * s_prev * i_prev / n, rates.gamma * i_prev,
          rates.nu * i_prev};
}

double poisson_logpmf(double count, double mean) {
  if (!(mean > 0.0)) throw std::domain_error("poisson_logpmf: mean must be positive");
  if (count < 0.0) throw std::domain_error("poisson_logpmf: count must be nonnegative");
  if (count == 0.0) return -mean;
  return count * std::log(mean) - mean - std::lgamma(count + 1.0);
}

MomentPair skellam_conditional_moments(const RateTriple& rates, double i_prev,
                                       double s_prev, double n) {
  const PoissonMeans m = poisson_means(rates, i_prev, s_prev, n);
  return {i_prev + m.lambda1 - m.lambda2 - m.lambda3,
          m.lambda1 + m.lambda2 + m.lambda3};
}

MomentPair unconditional_moments(const RateTriple& rates, double i0, int t) {
  const double r0 = rates.beta / (rates.gamma + rates.nu);
  const double pi = 1.0 + rates.beta * (1.0 - 1.0 / r0);
  const double mean = std::pow(pi, t) * i0;
  const double disp = rates.beta * (1.0 + 1.0 / r0);
  double variance;
  if (pi == 1.0) {
    variance = disp * t * i0;
  } else {
    variance = disp * std::pow(pi, t - 1) * (1.0 - std::pow(pi, t)) / (1.0 - pi) * i0;
  }
  return {mean, variance};
}

double effective_reproduction(const RateTriple& rates, double s, double n) {
  const double denom = rates.gamma + rates.nu;
  if (!(denom > 0.0))
    throw std::domain_error("effective_reproduction: gamma + nu must be positive");
  return rates.beta * (s / n) / denom;
}

}  // namespace sird
