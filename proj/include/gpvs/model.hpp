#pragma once

#include "gpvs/errors.hpp"
#include "gpvs/kernel.hpp"
#include "gpvs/state.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace gpvs {

/// Lower bound on the nugget ratio inside the sampler, where it is walked on
/// the log scale.
inline constexpr double kNuggetFloor = 1e-10;

/// Hyperpriors. Defaults: slab N(0, 5^2) for each coefficient, N(0, 10^2)
/// for the intercept, Inv-Gamma(3, 2) for the process variance and
/// Inv-Gamma(3, 0.2) for the nugget ratio. Mixture weights are U(0, 1).
struct PriorConfig {
  double tau = 5.0;
  double beta0_sd = 10.0;
  double sigma2_shape = 3.0;
  double sigma2_scale = 2.0;
  double lambda_shape = 3.0;
  double lambda_scale = 0.2;

  void validate() const {
    auto check = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v))
        throw InvalidArgument(std::string("prior parameter '") + name + "' must be positive");
    };
    check(tau, "tau");
    check(beta0_sd, "beta0_sd");
    check(sigma2_shape, "sigma2_shape");
    check(sigma2_scale, "sigma2_scale");
    check(lambda_shape, "lambda_shape");
    check(lambda_scale, "lambda_scale");
  }
};

namespace density {

inline double log_normal(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

/// Inverse-gamma with shape a and scale b.
inline double log_inv_gamma(double x, double a, double b) {
  if (!(x > 0.0))
    return -std::numeric_limits<double>::infinity();
  return a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(x) - b / x;
}

} // namespace density

/// Log prior density of (indicators, state). Point-mass components contribute
/// only their Bernoulli mass; the U(0,1) slab on rho and the U(0,1) priors on
/// the weights contribute zero.
inline double log_prior(const ModelIndicator& m, const ParameterState& s, const PriorConfig& cfg) {
  require_consistent(m, s);
  if (!(s.omega_linear > 0.0 && s.omega_linear < 1.0) ||
      !(s.omega_spatial > 0.0 && s.omega_spatial < 1.0))
    throw InvalidState("inclusion weights must lie strictly inside (0, 1)");
  if (!(s.sigma2 > 0.0) || !(s.nugget >= 0.0))
    throw InvalidState("variance parameters out of range");

  const auto p = static_cast<double>(m.size());
  const auto kl = static_cast<double>(m.linear_count());
  const auto ks = static_cast<double>(m.spatial_count());
  double lp = kl * std::log(s.omega_linear) + (p - kl) * std::log1p(-s.omega_linear);
  lp += ks * std::log(s.omega_spatial) + (p - ks) * std::log1p(-s.omega_spatial);
  for (std::size_t j = 0; j < m.size(); ++j)
    if (m.linear[j])
      lp += density::log_normal(s.beta(static_cast<Eigen::Index>(j)), 0.0, cfg.tau);
  lp += density::log_normal(s.intercept, 0.0, cfg.beta0_sd);
  lp += density::log_inv_gamma(s.sigma2, cfg.sigma2_shape, cfg.sigma2_scale);
  lp += density::log_inv_gamma(s.nugget, cfg.lambda_shape, cfg.lambda_scale);
  return lp;
}

/// The Gaussian-process marginal likelihood.
struct GaussianLikelihood {
  double operator()(const Dataset& data, const ParameterState& s) const {
    return log_likelihood(data, s);
  }
};

/// Constant likelihood; the posterior equals the prior. Used to check that a
/// sampler recovers the prior.
struct FlatLikelihood {
  double operator()(const Dataset&, const ParameterState&) const { return 0.0; }
};

/// Unnormalized log posterior: log likelihood plus log prior.
template <class Likelihood = GaussianLikelihood>
double log_posterior(const ModelIndicator& m, const ParameterState& s, const Dataset& data,
                     const PriorConfig& cfg, const Likelihood& likelihood = {}) {
  const double prior = log_prior(m, s, cfg);
  return likelihood(data, s) + prior;
}

/// Parameters on the scale the random walk operates on: log variance, log
/// nugget ratio and logit weights. Coefficients and correlations pass through.
struct TransformedState {
  double intercept = 0.0;
  Eigen::VectorXd beta;
  Eigen::VectorXd rho;
  double log_sigma2 = 0.0;
  double log_nugget = 0.0;
  double logit_omega_linear = 0.0;
  double logit_omega_spatial = 0.0;
};

inline double logit(double w) { return std::log(w) - std::log1p(-w); }
inline double inv_logit(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline TransformedState to_unconstrained(const ParameterState& s) {
  if (!(s.sigma2 > 0.0))
    throw TransformError("process variance must be positive to take its log");
  if (!(s.nugget > 0.0))
    throw TransformError("nugget ratio must be positive to take its log");
  if (!(s.omega_linear > 0.0 && s.omega_linear < 1.0) ||
      !(s.omega_spatial > 0.0 && s.omega_spatial < 1.0))
    throw TransformError("inclusion weights must lie strictly inside (0, 1)");
  return {s.intercept,          s.beta,       s.rho, std::log(s.sigma2), std::log(s.nugget),
          logit(s.omega_linear), logit(s.omega_spatial)};
}

inline ParameterState from_unconstrained(const TransformedState& t) {
  ParameterState s;
  s.intercept = t.intercept;
  s.beta = t.beta;
  s.rho = t.rho;
  s.sigma2 = std::exp(t.log_sigma2);
  s.nugget = std::exp(t.log_nugget);
  s.omega_linear = inv_logit(t.logit_omega_linear);
  s.omega_spatial = inv_logit(t.logit_omega_spatial);
  return s;
}

/// log |d(sigma2, nugget, w_lin, w_spa) / d(log sigma2, log nugget, logit w_lin, logit w_spa)|
/// = log(sigma2 * nugget * w_lin (1 - w_lin) * w_spa (1 - w_spa)).
inline double log_jacobian(const TransformedState& t) {
  // log w (1 - w) = -softplus(x) - softplus(-x), written to stay finite for large |x|
  auto log_w_1mw = [](double x) {
    auto softplus = [](double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); };
    return -softplus(x) - softplus(-x);
  };
  return t.log_sigma2 + t.log_nugget + log_w_1mw(t.logit_omega_linear) +
         log_w_1mw(t.logit_omega_spatial);
}

inline double log_jacobian(const ParameterState& s) { return log_jacobian(to_unconstrained(s)); }

} // namespace gpvs
