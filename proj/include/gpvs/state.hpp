#pragma once

#include "gpvs/errors.hpp"

#include <Eigen/Dense>

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

namespace gpvs {

/// Which covariates enter the linear trend and which enter the correlation
/// structure of the Gaussian process.
struct ModelIndicator {
  std::vector<std::uint8_t> linear;
  std::vector<std::uint8_t> spatial;

  ModelIndicator() = default;
  explicit ModelIndicator(std::size_t p) : linear(p, 0), spatial(p, 0) {}
  ModelIndicator(std::vector<std::uint8_t> lin, std::vector<std::uint8_t> spa)
      : linear(std::move(lin)), spatial(std::move(spa)) {
    if (linear.size() != spatial.size())
      throw InvalidArgument("linear and spatial indicator vectors differ in length");
  }

  static ModelIndicator full(std::size_t p) {
    return {std::vector<std::uint8_t>(p, 1), std::vector<std::uint8_t>(p, 1)};
  }
  /// Constant mean, every covariate in the correlation (ordinary kriging).
  static ModelIndicator ordinary_kriging(std::size_t p) {
    return {std::vector<std::uint8_t>(p, 0), std::vector<std::uint8_t>(p, 1)};
  }
  /// Linear trend in every covariate plus full correlation (universal kriging).
  static ModelIndicator universal_kriging(std::size_t p) { return full(p); }

  std::size_t size() const { return linear.size(); }

  /// Indicator i in [0, 2p): the first p are linear, the next p spatial.
  std::uint8_t flat(std::size_t i) const { return i < size() ? linear[i] : spatial[i - size()]; }
  std::uint8_t& flat(std::size_t i) { return i < size() ? linear[i] : spatial[i - size()]; }

  std::size_t linear_count() const {
    std::size_t c = 0;
    for (auto v : linear)
      c += v != 0;
    return c;
  }
  std::size_t spatial_count() const {
    std::size_t c = 0;
    for (auto v : spatial)
      c += v != 0;
    return c;
  }
  std::size_t active_count() const { return linear_count() + spatial_count(); }

  /// Compact form, e.g. "L:01100|S:11100".
  std::string to_string() const {
    std::string s = "L:";
    for (auto v : linear)
      s += v ? '1' : '0';
    s += "|S:";
    for (auto v : spatial)
      s += v ? '1' : '0';
    return s;
  }

  auto operator<=>(const ModelIndicator&) const = default;
};

/// Full continuous state of the semiparametric model.
struct ParameterState {
  double intercept = 0.0;
  Eigen::VectorXd beta;        ///< linear coefficients; zero where inactive
  Eigen::VectorXd rho;         ///< correlation parameters; one where inactive
  double sigma2 = 1.0;         ///< process variance
  double nugget = 0.1;         ///< noise-to-process variance ratio
  double omega_linear = 0.5;   ///< prior inclusion weight, linear part
  double omega_spatial = 0.5;  ///< prior inclusion weight, spatial part

  Eigen::Index size() const { return beta.size(); }
};

inline bool is_consistent(const ModelIndicator& m, const ParameterState& s) {
  const auto p = m.size();
  if (static_cast<std::size_t>(s.beta.size()) != p || static_cast<std::size_t>(s.rho.size()) != p)
    return false;
  for (std::size_t j = 0; j < p; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    if ((m.linear[j] != 0) != (s.beta(jj) != 0.0))
      return false;
    if ((m.spatial[j] != 0) != (s.rho(jj) != 1.0))
      return false;
    if (!(s.rho(jj) >= 0.0 && s.rho(jj) <= 1.0))
      return false;
  }
  return true;
}

inline void require_consistent(const ModelIndicator& m, const ParameterState& s) {
  if (!is_consistent(m, s))
    throw InvalidState("parameter state is inconsistent with model " + m.to_string());
}

} // namespace gpvs
