#pragma once

#include "gpvs/dataset.hpp"
#include "gpvs/errors.hpp"
#include "gpvs/state.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace gpvs {

/// Smallest correlation parameter used for active coordinates.
inline constexpr double kRhoFloor = 1e-12;

/// Diagonal additions tried, in order, when R + nugget*I fails to factorize.
inline constexpr std::array<double, 3> kJitterLadder{1e-10, 1e-8, 1e-6};

/// Separable Gaussian correlation parameters, one per covariate. A value of
/// exactly 1 marks the covariate as absent from the correlation.
struct CorrelationParams {
  Eigen::VectorXd rho;

  CorrelationParams() = default;
  explicit CorrelationParams(Eigen::VectorXd r) : rho(std::move(r)) { validate(); }

  Eigen::Index size() const { return rho.size(); }

  void validate() const {
    for (Eigen::Index j = 0; j < rho.size(); ++j)
      if (!(rho(j) >= 0.0 && rho(j) <= 1.0))
        throw InvalidArgument("correlation parameter " + std::to_string(j) + " = " +
                              std::to_string(rho(j)) + " lies outside [0, 1]");
  }

  /// log(rho_j), with active values clamped to kRhoFloor and inert ones exactly 0.
  Eigen::VectorXd log_rho() const {
    Eigen::VectorXd out(rho.size());
    for (Eigen::Index j = 0; j < rho.size(); ++j)
      out(j) = rho(j) == 1.0 ? 0.0 : std::log(std::max(rho(j), kRhoFloor));
    return out;
  }
};

template <class U, class V>
double correlation(const Eigen::MatrixBase<U>& u, const Eigen::MatrixBase<V>& v,
                   const CorrelationParams& params) {
  if (u.size() != params.size() || v.size() != params.size())
    throw InvalidArgument("point dimension does not match correlation parameter count");
  params.validate();
  double exponent = 0.0;
  for (Eigen::Index j = 0; j < params.size(); ++j) {
    const double r = params.rho(j);
    if (r == 1.0)
      continue;
    const double d = u(j) - v(j);
    if (d == 0.0)
      continue;
    exponent += d * d * std::log(std::max(r, kRhoFloor));
  }
  return std::exp(exponent);
}

/// Correlations between the rows of `a` (m x p) and the rows of `b` (n x p).
inline Eigen::MatrixXd cross_correlation(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                         const CorrelationParams& params) {
  if (a.cols() != params.size() || b.cols() != params.size())
    throw InvalidArgument("site dimension does not match correlation parameter count");
  params.validate();
  const Eigen::VectorXd lr = params.log_rho();
  Eigen::MatrixXd expo = Eigen::MatrixXd::Zero(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < params.size(); ++j) {
    if (lr(j) == 0.0)
      continue;
    for (Eigen::Index m = 0; m < b.rows(); ++m)
      for (Eigen::Index l = 0; l < a.rows(); ++l) {
        const double d = a(l, j) - b(m, j);
        expo(l, m) += lr(j) * d * d;
      }
  }
  return expo.array().exp().matrix();
}

/// Lower Cholesky factor of R + (nugget + jitter) I.
class CholeskyFactor {
public:
  CholeskyFactor(const Eigen::MatrixXd& values, double nugget) {
    if (!(nugget >= 0.0) || !std::isfinite(nugget))
      throw InvalidArgument("nugget must be finite and non-negative");
    std::vector<double> tried;
    Eigen::MatrixXd k = values;
    k.diagonal().array() += nugget;
    if (try_factor(k))
      return;
    tried.push_back(0.0);
    for (double j : kJitterLadder) {
      tried.push_back(j);
      Eigen::MatrixXd kj = k;
      kj.diagonal().array() += j;
      if (try_factor(kj)) {
        jitter_ = j;
        return;
      }
    }
    throw NumericalSingularity("correlation system is numerically singular (n = " +
                                   std::to_string(values.rows()) + ", nugget = " +
                                   std::to_string(nugget) + ")",
                               std::move(tried));
  }

  double jitter() const { return jitter_; }
  /// Reciprocal condition estimate (1-norm) of the factored matrix.
  double rcond() const { return llt_.rcond(); }
  Eigen::Index size() const { return llt_.rows(); }

  double log_det() const {
    return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
  }

  /// L^{-1} b
  template <class B> Eigen::MatrixXd whiten(const Eigen::MatrixBase<B>& b) const {
    return llt_.matrixL().solve(b);
  }

  /// (R + nugget I)^{-1} b via two triangular solves.
  template <class B> Eigen::MatrixXd solve(const Eigen::MatrixBase<B>& b) const {
    return llt_.solve(b);
  }

private:
  bool try_factor(const Eigen::MatrixXd& k) {
    llt_.compute(k);
    if (llt_.info() != Eigen::Success)
      return false;
    const auto diag = llt_.matrixLLT().diagonal();
    return diag.allFinite() && (diag.array() > 0.0).all();
  }

  Eigen::LLT<Eigen::MatrixXd> llt_;
  double jitter_ = 0.0;
};

/// Correlation matrix of a design, with a lazily built factorization of
/// R + nugget I.
class KernelMatrix {
public:
  KernelMatrix() = default;
  explicit KernelMatrix(Eigen::MatrixXd values) : values_(std::move(values)) {}

  const Eigen::MatrixXd& values() const { return values_; }
  Eigen::Index size() const { return values_.rows(); }

  const CholeskyFactor& factor(double nugget) const {
    if (!factor_ || factor_nugget_ != nugget) {
      factor_.emplace(values_, nugget);
      factor_nugget_ = nugget;
    }
    return *factor_;
  }

private:
  Eigen::MatrixXd values_;
  mutable std::optional<CholeskyFactor> factor_;
  mutable double factor_nugget_ = 0.0;
};

inline KernelMatrix correlation_matrix(const Eigen::MatrixXd& x, const CorrelationParams& params) {
  if (x.rows() < 1)
    throw InvalidArgument("design must have at least one row");
  Eigen::MatrixXd r = cross_correlation(x, x, params);
  // exact symmetry and unit diagonal regardless of rounding in exp()
  for (Eigen::Index l = 0; l < r.rows(); ++l) {
    r(l, l) = 1.0;
    for (Eigen::Index m = 0; m < l; ++m)
      r(m, l) = r(l, m);
  }
  return KernelMatrix(std::move(r));
}

/// Residual y - intercept - X beta.
inline Eigen::VectorXd trend_residual(const Dataset& data, const ParameterState& s) {
  if (s.beta.size() != data.cols())
    throw InvalidArgument("coefficient count does not match design width");
  return data.y - data.x * s.beta - Eigen::VectorXd::Constant(data.rows(), s.intercept);
}

/// Gaussian log-density of y under mean intercept + X beta and covariance
/// sigma2 (R(rho) + nugget I).
inline double log_likelihood(const Dataset& data, const ParameterState& s) {
  if (!(s.sigma2 > 0.0))
    throw InvalidArgument("process variance must be positive");
  if (s.rho.size() != data.cols())
    throw InvalidArgument("correlation parameter count does not match design width");
  const auto n = static_cast<double>(data.rows());
  const Eigen::VectorXd resid = trend_residual(data, s);
  const KernelMatrix r = correlation_matrix(data.x, CorrelationParams(s.rho));
  const CholeskyFactor& f = r.factor(s.nugget);
  const double quad = f.whiten(resid).squaredNorm() / s.sigma2;
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + n * std::log(s.sigma2) + f.log_det() + quad);
}

} // namespace gpvs
