#pragma once

#include "gpvs/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace gpvs {

struct Interval {
  double lower = 0.0;
  double upper = 1.0;
};

struct LhdDesign {
  Eigen::MatrixXd points;
  /// strata(i, j) in [0, n): the stratum of point i along covariate j
  Eigen::MatrixXi strata;
  double maximin_dist = 0.0;
};

namespace detail {

struct MinDistance {
  double dist = std::numeric_limits<double>::infinity();
  std::size_t ties = 0;  ///< pairs at the minimum
  Eigen::Index a = 0, b = 0;
};

inline MinDistance min_distance(const Eigen::MatrixXd& pts) {
  MinDistance out;
  for (Eigen::Index i = 0; i < pts.rows(); ++i)
    for (Eigen::Index k = i + 1; k < pts.rows(); ++k) {
      const double d2 = (pts.row(i) - pts.row(k)).squaredNorm();
      if (d2 < out.dist) {
        out = {d2, 1, i, k};
      } else if (d2 == out.dist) {
        ++out.ties;
      }
    }
  out.dist = std::sqrt(out.dist);
  return out;
}

inline void place_midpoints(LhdDesign& d, Interval box) {
  const auto n = static_cast<double>(d.strata.rows());
  d.points = ((d.strata.cast<double>().array() + 0.5) / n * (box.upper - box.lower) + box.lower).matrix();
}

} // namespace detail

/// Each column an independent random permutation of the strata; points sit at
/// stratum midpoints.
template <class Rng>
LhdDesign random_lhd(std::size_t n, std::size_t p, Interval box, Rng& rng) {
  if (n < 2)
    throw InvalidArgument("a Latin hypercube needs at least two runs");
  if (p < 1)
    throw InvalidArgument("a Latin hypercube needs at least one dimension");
  if (!(box.upper > box.lower))
    throw InvalidArgument("design box must satisfy lower < upper");
  LhdDesign d;
  d.strata.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  std::vector<int> perm(n);
  for (std::size_t j = 0; j < p; ++j) {
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(perm[i - 1], perm[pick(rng)]);
    }
    for (std::size_t i = 0; i < n; ++i)
      d.strata(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = perm[i];
  }
  detail::place_midpoints(d, box);
  d.maximin_dist = detail::min_distance(d.points).dist;
  return d;
}

/// Random LHD improved by within-column swaps. A swap always involves one
/// point of the closest pair and is kept when it does not reduce the minimum
/// distance (and, at equal minimum, does not add closest pairs). The best of
/// `n_restarts` independent climbs is returned; restart 0 starts from the
/// first random_lhd drawn from a generator seeded with `seed`.
inline LhdDesign maximin_lhd(std::size_t n, std::size_t p, Interval box, std::uint64_t seed,
                             std::size_t n_restarts = 10, std::size_t max_swaps = 2000) {
  if (n_restarts < 1)
    throw InvalidArgument("at least one restart is required");
  std::mt19937_64 rng(seed);
  LhdDesign best;
  bool have_best = false;
  for (std::size_t r = 0; r < n_restarts; ++r) {
    LhdDesign d = random_lhd(n, p, box, rng);
    auto cur = detail::min_distance(d.points);
    std::uniform_int_distribution<std::size_t> pick_col(0, p - 1);
    std::uniform_int_distribution<Eigen::Index> pick_row(0, static_cast<Eigen::Index>(n) - 1);
    std::bernoulli_distribution coin(0.5);
    std::size_t stale = 0;
    for (std::size_t s = 0; s < max_swaps && stale < 10 * n * p; ++s) {
      const auto j = static_cast<Eigen::Index>(pick_col(rng));
      const Eigen::Index a = coin(rng) ? cur.a : cur.b;
      Eigen::Index b = pick_row(rng);
      if (b == a)
        continue;
      std::swap(d.strata(a, j), d.strata(b, j));
      std::swap(d.points(a, j), d.points(b, j));
      const auto next = detail::min_distance(d.points);
      if (next.dist > cur.dist || (next.dist == cur.dist && next.ties <= cur.ties)) {
        stale = next.dist > cur.dist || next.ties < cur.ties ? 0 : stale + 1;
        cur = next;
      } else {
        std::swap(d.strata(a, j), d.strata(b, j));
        std::swap(d.points(a, j), d.points(b, j));
        ++stale;
      }
    }
    d.maximin_dist = cur.dist;
    if (!have_best || d.maximin_dist > best.maximin_dist) {
      best = std::move(d);
      have_best = true;
    }
  }
  return best;
}

/// True when every column visits each of the n strata exactly once.
inline bool is_latin(const LhdDesign& d) {
  const auto n = d.strata.rows();
  for (Eigen::Index j = 0; j < d.strata.cols(); ++j) {
    std::vector<int> seen(static_cast<std::size_t>(n), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int s = d.strata(i, j);
      if (s < 0 || s >= n || seen[static_cast<std::size_t>(s)]++)
        return false;
    }
  }
  return true;
}

/// Noise-free five-covariate test function: linear in x2, x3, x4, cosine
/// terms in x1, x2, x3, and no dependence on x5.
template <class V> double sim_response_mean(const Eigen::MatrixBase<V>& x) {
  if (x.size() != 5)
    throw InvalidArgument("the simulation response takes exactly 5 covariates");
  constexpr double pi = std::numbers::pi;
  return 3.0 * x(1) + 4.0 * x(2) + 5.0 * x(3) + 5.0 * std::cos(3.0 * pi * x(0) / 2.0) +
         4.0 * std::cos(2.0 * pi * x(1) / 2.0) + 3.0 * std::cos(pi * x(2) / 2.0);
}

template <class V, class Rng>
double sim_response(const Eigen::MatrixBase<V>& x, double noise_sd, Rng& rng) {
  const double mean = sim_response_mean(x);
  if (noise_sd == 0.0)
    return mean;
  if (!(noise_sd > 0.0))
    throw InvalidArgument("noise standard deviation must be non-negative");
  std::normal_distribution<double> eps(0.0, noise_sd);
  return mean + eps(rng);
}

/// Root mean square prediction error.
template <class A, class B>
double rmspe(const Eigen::MatrixBase<A>& truth, const Eigen::MatrixBase<B>& pred) {
  if (truth.size() != pred.size())
    throw InvalidArgument("rmspe: vectors differ in length");
  if (truth.size() < 1)
    throw InvalidArgument("rmspe: empty vectors");
  return std::sqrt((truth - pred).squaredNorm() / static_cast<double>(truth.size()));
}

} // namespace gpvs
