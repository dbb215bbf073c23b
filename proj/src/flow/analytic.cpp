#include "disca/flow/analytic.hpp"

#include <cmath>

#include "disca/errors.hpp"

namespace disca::flow {

namespace {

double path_std(double t, double s) { return std::sqrt((1.0 - t) * (1.0 - t) * s * s + t * t); }

void check(double t, double sigma_d) {
  require(t >= 0.0 && t <= 1.0, "gaussian velocity: t outside [0,1]");
  require(sigma_d > 0.0, "gaussian velocity: sigma_d must be positive");
}

}  // namespace

double gaussian_velocity_coeff(double t, double sigma_d) {
  check(t, sigma_d);
  const double s2 = sigma_d * sigma_d;
  return (t - (1.0 - t) * s2) / ((1.0 - t) * (1.0 - t) * s2 + t * t);
}

ad::Tensor analytic_gaussian_velocity(const ad::Tensor& x, double t, double sigma_d) {
  return gaussian_velocity_coeff(t, sigma_d) * x;
}

double gaussian_flow_map(double r, double t, double sigma_d) {
  check(t, sigma_d);
  check(r, sigma_d);
  return path_std(r, sigma_d) / path_std(t, sigma_d);
}

ad::Tensor analytic_mean_velocity(const ad::Tensor& x_t, const TimePair& pair, double sigma_d) {
  require_valid(pair);
  if (pair.r == pair.t) return analytic_gaussian_velocity(x_t, pair.t, sigma_d);
  const double phi = gaussian_flow_map(pair.r, pair.t, sigma_d);
  return ((1.0 - phi) / pair.interval()) * x_t;
}

}  // namespace disca::flow
