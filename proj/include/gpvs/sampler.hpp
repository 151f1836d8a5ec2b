#pragma once

#include "gpvs/dataset.hpp"
#include "gpvs/errors.hpp"
#include "gpvs/log.hpp"
#include "gpvs/model.hpp"
#include "gpvs/parallel.hpp"
#include "gpvs/state.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace gpvs {

struct SamplerConfig {
  std::size_t n_iter = 55000;  ///< total iterations, burn-in included
  std::size_t burn_in = 5000;
  double flip_rate = 0.0;      ///< per-indicator flip probability; 0 selects 1/(2p)
  double jitter_sd_beta = 0.1;
  double jitter_sd_rho = 0.02;
  /// Random-walk step sizes for (intercept, log sigma2, log nugget,
  /// logit w_linear, logit w_spatial).
  std::array<double, 5> rw_sd{0.2, 0.2, 0.2, 0.3, 0.3};
  std::uint64_t seed = 1;
  std::size_t thin = 1;
  /// Jitter active coefficients and correlations even when no indicator flips.
  bool jitter_on_pure_walk = true;
  /// Include the proposal-density ratio for coefficients drawn on activation.
  /// Without it the plain Metropolis ratio is used for every move.
  bool hastings_correction = true;

  double flip_rate_for(std::size_t p) const {
    return flip_rate > 0.0 ? flip_rate : 1.0 / (2.0 * static_cast<double>(p));
  }

  std::size_t stored_draws() const { return (n_iter - burn_in) / thin; }

  void validate() const {
    if (burn_in >= n_iter)
      throw InvalidArgument("burn-in must be smaller than the iteration count");
    if (thin < 1)
      throw InvalidArgument("thinning interval must be at least 1");
    if (flip_rate < 0.0 || flip_rate > 1.0)
      throw InvalidArgument("flip rate must lie in (0, 1]");
    if (!(jitter_sd_beta > 0.0) || !(jitter_sd_rho > 0.0))
      throw InvalidArgument("jitter standard deviations must be positive");
    for (double s : rw_sd)
      if (!(s > 0.0))
        throw InvalidArgument("random-walk standard deviations must be positive");
  }
};

struct ChainState {
  ModelIndicator model;
  ParameterState state;
};

struct Draw {
  std::size_t iter = 0;
  ModelIndicator model;
  ParameterState state;
  double log_post = 0.0;
  bool accepted = false;
};

struct Chain {
  std::vector<Draw> draws;
  std::size_t iterations = 0;
  std::size_t accepted_total = 0;
  std::size_t singular_proposals = 0;

  double acceptance_rate() const {
    return iterations ? static_cast<double>(accepted_total) / static_cast<double>(iterations) : 0.0;
  }
  std::size_t size() const { return draws.size(); }
  bool empty() const { return draws.empty(); }
};

/// A proposed state plus the log ratio of reverse to forward proposal
/// densities. The ratio is non-zero only when linear indicators flip: a
/// coefficient drawn from N(0, tau^2) on activation has no matching density on
/// deactivation.
struct Proposal {
  ChainState state;
  double log_hastings = 0.0;
  std::size_t flips = 0;
  bool in_support = true;
};

namespace detail {

/// Folds x back into (0, 1) by reflection at both ends.
inline double reflect_unit(double x) {
  x = std::fmod(x, 2.0);
  if (x < 0.0)
    x += 2.0;
  if (x > 1.0)
    x = 2.0 - x;
  if (x <= 0.0)
    x = std::numeric_limits<double>::min();
  if (x >= 1.0)
    x = std::nextafter(1.0, 0.0);
  return x;
}

template <class Rng> double open_unit(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double v;
  do
    v = u(rng);
  while (v <= 0.0 || v >= 1.0);
  return v;
}

template <class Rng> double nonzero_normal(Rng& rng, double mean, double sd) {
  std::normal_distribution<double> n(mean, sd);
  double v;
  do
    v = n(rng);
  while (v == 0.0);
  return v;
}

} // namespace detail

/// Flips k ~ Binom(2p, nu) distinct indicators, jitters the untouched active
/// coefficients and correlations, then random-walks the transformed scalars.
template <class Rng>
Proposal propose(const ChainState& current, const SamplerConfig& cfg, const PriorConfig& prior,
                 Rng& rng) {
  const std::size_t p = current.model.size();
  Proposal out{current, 0.0, 0, true};
  auto& m = out.state.model;
  auto& s = out.state.state;

  std::binomial_distribution<std::size_t> kdist(2 * p, cfg.flip_rate_for(p));
  const std::size_t k = kdist(rng);
  std::vector<std::size_t> order(2 * p);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, 2 * p - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  std::vector<std::uint8_t> flipped(2 * p, 0);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t idx = order[i];
    flipped[idx] = 1;
    if (idx < p) {
      const auto j = static_cast<Eigen::Index>(idx);
      if (m.linear[idx]) {
        out.log_hastings += density::log_normal(s.beta(j), 0.0, prior.tau);
        s.beta(j) = 0.0;
        m.linear[idx] = 0;
      } else {
        s.beta(j) = detail::nonzero_normal(rng, 0.0, prior.tau);
        out.log_hastings -= density::log_normal(s.beta(j), 0.0, prior.tau);
        m.linear[idx] = 1;
      }
    } else {
      const std::size_t c = idx - p;
      const auto j = static_cast<Eigen::Index>(c);
      if (m.spatial[c]) {
        s.rho(j) = 1.0;
        m.spatial[c] = 0;
      } else {
        s.rho(j) = detail::open_unit(rng);
        m.spatial[c] = 1;
      }
    }
  }
  out.flips = k;

  if (k > 0 || cfg.jitter_on_pure_walk) {
    std::normal_distribution<double> jb(0.0, cfg.jitter_sd_beta);
    std::normal_distribution<double> jr(0.0, cfg.jitter_sd_rho);
    for (std::size_t j = 0; j < p; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      if (m.linear[j] && !flipped[j]) {
        s.beta(jj) += jb(rng);
        if (s.beta(jj) == 0.0)
          out.in_support = false;
      }
      if (m.spatial[j] && !flipped[p + j])
        s.rho(jj) = detail::reflect_unit(s.rho(jj) + jr(rng));
    }
  }

  TransformedState t = to_unconstrained(s);
  std::normal_distribution<double> step(0.0, 1.0);
  t.intercept += cfg.rw_sd[0] * step(rng);
  t.log_sigma2 += cfg.rw_sd[1] * step(rng);
  t.log_nugget += cfg.rw_sd[2] * step(rng);
  t.logit_omega_linear += cfg.rw_sd[3] * step(rng);
  t.logit_omega_spatial += cfg.rw_sd[4] * step(rng);
  ParameterState next = from_unconstrained(t);
  if (!(next.nugget >= kNuggetFloor) || !(next.sigma2 > 0.0) || !std::isfinite(next.sigma2) ||
      !std::isfinite(next.nugget) || !(next.omega_linear > 0.0 && next.omega_linear < 1.0) ||
      !(next.omega_spatial > 0.0 && next.omega_spatial < 1.0))
    out.in_support = false;
  s = std::move(next);
  return out;
}

/// Log density on the sampler's scale: log posterior plus the log Jacobian of
/// the transformed scalars.
template <class Likelihood = GaussianLikelihood>
double log_target(const ChainState& cs, const Dataset& data, const PriorConfig& prior,
                  const Likelihood& likelihood = {}) {
  return log_posterior(cs.model, cs.state, data, prior, likelihood) + log_jacobian(cs.state);
}

/// Metropolis-Hastings acceptance probability. A numerically singular
/// proposal is rejected outright.
template <class Likelihood = GaussianLikelihood>
double accept_probability(const ChainState& current, const ChainState& proposed,
                          const Dataset& data, const PriorConfig& prior,
                          double log_hastings = 0.0, const Likelihood& likelihood = {}) {
  const double cur = log_target(current, data, prior, likelihood);
  double next;
  try {
    next = log_target(proposed, data, prior, likelihood);
  } catch (const NumericalSingularity& e) {
    warn(std::string("rejecting singular proposal: ") + e.what());
    return 0.0;
  }
  const double log_ratio = next - cur + log_hastings;
  if (std::isnan(log_ratio))
    return 0.0;
  return log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
}

/// Starting point: every indicator active, coefficients from least squares,
/// correlations at 0.5.
inline ChainState initial_state(const Dataset& data) {
  const auto n = data.rows();
  const auto p = data.cols();
  Eigen::MatrixXd f(n, p + 1);
  f << Eigen::VectorXd::Ones(n), data.x;
  const Eigen::VectorXd coef = f.completeOrthogonalDecomposition().solve(data.y);
  ChainState cs{ModelIndicator::full(static_cast<std::size_t>(p)), {}};
  auto& s = cs.state;
  s.intercept = coef(0);
  s.beta = coef.tail(p);
  s.rho = Eigen::VectorXd::Constant(p, 0.5);
  for (Eigen::Index j = 0; j < p; ++j)
    if (s.beta(j) == 0.0 || !std::isfinite(s.beta(j))) {
      s.beta(j) = 0.0;
      cs.model.linear[static_cast<std::size_t>(j)] = 0;
    }
  const Eigen::VectorXd resid = data.y - f * coef;
  const double var = n > 1 ? resid.squaredNorm() / static_cast<double>(n) : 1.0;
  s.sigma2 = std::isfinite(var) && var > 1e-6 ? var : 1.0;
  s.nugget = 0.1;
  s.omega_linear = 0.5;
  s.omega_spatial = 0.5;
  return cs;
}

struct NoObserver {
  void operator()(const Draw&) const {}
};

namespace detail {
inline std::string describe(const ChainState& cs) {
  std::ostringstream os;
  os << "model " << cs.model.to_string() << ", intercept " << cs.state.intercept << ", sigma2 "
     << cs.state.sigma2 << ", nugget " << cs.state.nugget << ", rho [" << cs.state.rho.transpose()
     << "], beta [" << cs.state.beta.transpose() << "]";
  return os.str();
}
} // namespace detail

/// Consecutive singular proposals tolerated before the run is aborted.
inline constexpr std::size_t kMaxConsecutiveSingular = 1000;

/// Runs the chain and keeps every `thin`-th post-burn-in draw. The observer
/// sees each stored draw as it is produced.
template <class Likelihood = GaussianLikelihood, class Observer = NoObserver>
Chain run_chain(const Dataset& data, const PriorConfig& prior, const SamplerConfig& cfg,
                const Likelihood& likelihood = {}, Observer&& observer = {},
                std::optional<ChainState> start = std::nullopt) {
  data.validate();
  prior.validate();
  cfg.validate();

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  ChainState cur = start ? *start : initial_state(data);
  require_consistent(cur.model, cur.state);
  if (cur.state.nugget < kNuggetFloor)
    cur.state.nugget = kNuggetFloor;

  double cur_target;
  try {
    cur_target = log_target(cur, data, prior, likelihood);
  } catch (const NumericalSingularity& e) {
    throw NumericalSingularity(std::string("initial state is not evaluable: ") + e.what() + " [" +
                                   detail::describe(cur) + "]",
                               e.attempted_jitters());
  }
  double cur_lp = cur_target - log_jacobian(cur.state);

  Chain chain;
  chain.draws.reserve(cfg.stored_draws());
  std::size_t consecutive_singular = 0;
  for (std::size_t it = 0; it < cfg.n_iter; ++it) {
    Proposal prop = propose(cur, cfg, prior, rng);
    bool accepted = false;
    if (prop.in_support) {
      double next_target = -std::numeric_limits<double>::infinity();
      bool evaluable = true;
      try {
        next_target = log_target(prop.state, data, prior, likelihood);
        consecutive_singular = 0;
      } catch (const NumericalSingularity& e) {
        evaluable = false;
        ++chain.singular_proposals;
        if (++consecutive_singular > kMaxConsecutiveSingular)
          throw NumericalSingularity(std::string("persistent factorization failure: ") + e.what() +
                                         " [" + detail::describe(prop.state) + "]",
                                     e.attempted_jitters());
      }
      const double u = unif(rng);
      if (evaluable) {
        const double log_alpha =
            next_target - cur_target + (cfg.hastings_correction ? prop.log_hastings : 0.0);
        if (!std::isnan(log_alpha) && std::log(u) < log_alpha) {
          cur = std::move(prop.state);
          cur_target = next_target;
          cur_lp = cur_target - log_jacobian(cur.state);
          accepted = true;
        }
      }
    }
    ++chain.iterations;
    chain.accepted_total += accepted;
    if (it >= cfg.burn_in && (it - cfg.burn_in + 1) % cfg.thin == 0) {
      chain.draws.push_back(Draw{it, cur.model, cur.state, cur_lp, accepted});
      observer(chain.draws.back());
    }
  }
  if (chain.singular_proposals > 0)
    warn(std::to_string(chain.singular_proposals) +
         " proposals were rejected as numerically singular");
  return chain;
}

/// Independent chains with seeds seed, seed+1, ...; post-burn-in draws are
/// concatenated in seed order.
template <class Likelihood = GaussianLikelihood>
Chain run_chains(const Dataset& data, const PriorConfig& prior, const SamplerConfig& cfg,
                 std::size_t n_chains, std::size_t threads = 1, const Likelihood& likelihood = {}) {
  if (n_chains < 1)
    throw InvalidArgument("at least one chain is required");
  std::vector<Chain> chains(n_chains);
  parallel_for(n_chains, threads, [&](std::size_t c) {
    SamplerConfig local = cfg;
    local.seed = cfg.seed + c;
    chains[c] = run_chain(data, prior, local, likelihood);
  });
  Chain merged = std::move(chains.front());
  for (std::size_t c = 1; c < n_chains; ++c) {
    merged.iterations += chains[c].iterations;
    merged.accepted_total += chains[c].accepted_total;
    merged.singular_proposals += chains[c].singular_proposals;
    merged.draws.insert(merged.draws.end(), std::make_move_iterator(chains[c].draws.begin()),
                        std::make_move_iterator(chains[c].draws.end()));
  }
  return merged;
}

} // namespace gpvs
