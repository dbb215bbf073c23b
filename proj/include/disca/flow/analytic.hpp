#pragma once

#include "disca/ad/tensor.hpp"
#include "disca/flow/time_pair.hpp"

namespace disca::flow {

// Closed forms for data N(0, sigma_d^2) and noise N(0, 1) along
// x_t = (1 - t) x0 + t x1. With s(t)^2 = (1 - t)^2 sigma_d^2 + t^2 the
// marginal velocity is E[x1 - x0 | x_t = x] = a(t) x, a(t) = s'(t) / s(t).
double gaussian_velocity_coeff(double t, double sigma_d);
ad::Tensor analytic_gaussian_velocity(const ad::Tensor& x, double t, double sigma_d);

// Solution operator of dx/dtau = a(tau) x from t back to r: s(r) / s(t).
double gaussian_flow_map(double r, double t, double sigma_d);

// (x_t - Phi(r,t) x_t) / (t - r); the instantaneous velocity when r == t.
ad::Tensor analytic_mean_velocity(const ad::Tensor& x_t, const TimePair& pair, double sigma_d);

}  // namespace disca::flow
