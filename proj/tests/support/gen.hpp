#pragma once

// Small random generators for property tests.

#include "gpvs/dataset.hpp"
#include "gpvs/state.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace gen {

using Rng = std::mt19937_64;

inline double uniform(Rng& r, double a = 0.0, double b = 1.0) {
  return std::uniform_real_distribution<double>(a, b)(r);
}

inline int integer(Rng& r, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(r); }

inline double normal(Rng& r, double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(r); }

inline Eigen::MatrixXd unit_matrix(Rng& r, Eigen::Index n, Eigen::Index p) {
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j)
      x(i, j) = uniform(r);
  return x;
}

inline gpvs::Dataset dataset(Rng& r, Eigen::Index n, Eigen::Index p) {
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i)
    y(i) = normal(r, 2.0);
  return gpvs::make_dataset(unit_matrix(r, n, p), y);
}

inline gpvs::ModelIndicator model(Rng& r, std::size_t p, double on = 0.5) {
  gpvs::ModelIndicator m(p);
  std::bernoulli_distribution b(on);
  for (std::size_t j = 0; j < p; ++j) {
    m.linear[j] = b(r);
    m.spatial[j] = b(r);
  }
  return m;
}

/// A state consistent with `m`, with parameters in comfortable ranges.
inline gpvs::ParameterState state(Rng& r, const gpvs::ModelIndicator& m) {
  const auto p = static_cast<Eigen::Index>(m.size());
  gpvs::ParameterState s;
  s.intercept = normal(r, 2.0);
  s.beta = Eigen::VectorXd::Zero(p);
  s.rho = Eigen::VectorXd::Ones(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    if (m.linear[static_cast<std::size_t>(j)])
      s.beta(j) = normal(r, 2.0) + 0.1;
    if (m.spatial[static_cast<std::size_t>(j)])
      s.rho(j) = uniform(r, 0.05, 0.95);
  }
  s.sigma2 = std::exp(uniform(r, -1.0, 1.5));
  s.nugget = std::exp(uniform(r, -5.0, 0.0));
  s.omega_linear = uniform(r, 0.05, 0.95);
  s.omega_spatial = uniform(r, 0.05, 0.95);
  return s;
}

} // namespace gen
