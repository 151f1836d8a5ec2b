#pragma once

#include "gpvs/dataset.hpp"
#include "gpvs/design.hpp"
#include "gpvs/errors.hpp"
#include "gpvs/log.hpp"
#include "gpvs/parallel.hpp"
#include "gpvs/predict.hpp"
#include "gpvs/sampler.hpp"
#include "gpvs/state.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace gpvs {

struct InclusionReport {
  Eigen::VectorXd linear;   ///< inclusion probability of each covariate in the trend
  Eigen::VectorXd spatial;  ///< inclusion probability in the correlation
  std::map<ModelIndicator, double> model_freqs;
  std::size_t n_draws = 0;

  std::size_t size() const { return static_cast<std::size_t>(linear.size()); }
  /// Probability of flat indicator i (linear first, then spatial).
  double flat(std::size_t i) const {
    return i < size() ? linear(static_cast<Eigen::Index>(i))
                      : spatial(static_cast<Eigen::Index>(i - size()));
  }
};

inline InclusionReport inclusion_probabilities(const Chain& chain) {
  if (chain.empty())
    throw InvalidArgument("cannot compute inclusion probabilities from an empty chain");
  const std::size_t p = chain.draws.front().model.size();
  std::vector<std::size_t> lin(p, 0), spa(p, 0);
  std::map<ModelIndicator, std::size_t> counts;
  for (const auto& d : chain.draws) {
    if (d.model.size() != p)
      throw InvalidArgument("chain draws disagree on the covariate count");
    for (std::size_t j = 0; j < p; ++j) {
      lin[j] += d.model.linear[j] != 0;
      spa[j] += d.model.spatial[j] != 0;
    }
    ++counts[d.model];
  }
  InclusionReport r;
  r.n_draws = chain.size();
  const auto n = static_cast<double>(r.n_draws);
  r.linear.resize(static_cast<Eigen::Index>(p));
  r.spatial.resize(static_cast<Eigen::Index>(p));
  for (std::size_t j = 0; j < p; ++j) {
    r.linear(static_cast<Eigen::Index>(j)) = static_cast<double>(lin[j]) / n;
    r.spatial(static_cast<Eigen::Index>(j)) = static_cast<double>(spa[j]) / n;
  }
  for (const auto& [m, c] : counts)
    r.model_freqs.emplace(m, static_cast<double>(c) / n);
  return r;
}

/// Most frequent model; ties go to fewer active indicators, then to the
/// lexicographically smaller indicator vector.
inline ModelIndicator map_model(const InclusionReport& report) {
  if (report.model_freqs.empty())
    throw InvalidArgument("no model frequencies to choose from");
  const ModelIndicator* best = nullptr;
  double best_freq = -1.0;
  for (const auto& [m, f] : report.model_freqs) {
    if (!best || f > best_freq ||
        (f == best_freq && m.active_count() < best->active_count())) {
      best = &m;
      best_freq = f;
    }
  }
  return *best;
}

/// Includes indicator i iff its inclusion probability is at least q. q = 0.5
/// gives the median model.
inline ModelIndicator threshold_model(const InclusionReport& report, double q) {
  ModelIndicator m(report.size());
  for (std::size_t j = 0; j < report.size(); ++j) {
    m.linear[j] = report.linear(static_cast<Eigen::Index>(j)) >= q;
    m.spatial[j] = report.spatial(static_cast<Eigen::Index>(j)) >= q;
  }
  return m;
}

/// Nested candidate models. Indicators at or above `high` are always in,
/// those below `low` never; the band in between is added one indicator at a
/// time in decreasing probability order. The bare auto-included model heads
/// the list only when it is non-empty, which keeps the list within 2p.
inline std::vector<ModelIndicator> candidate_ladder(const InclusionReport& report,
                                                    double low = 0.30, double high = 0.90) {
  if (!(low < high))
    throw InvalidArgument("ladder requires low < high");
  const std::size_t p = report.size();
  ModelIndicator base(p);
  std::vector<std::size_t> band;
  for (std::size_t i = 0; i < 2 * p; ++i) {
    const double pi = report.flat(i);
    if (pi >= high)
      base.flat(i) = 1;
    else if (pi >= low)
      band.push_back(i);
  }
  std::stable_sort(band.begin(), band.end(),
                   [&](std::size_t a, std::size_t b) { return report.flat(a) > report.flat(b); });
  std::vector<ModelIndicator> out;
  if (base.active_count() > 0 || band.empty())
    out.push_back(base);
  for (std::size_t i : band) {
    base.flat(i) = 1;
    out.push_back(base);
  }
  return out;
}

/// The inclusion-probability cutoff each candidate corresponds to: the
/// smallest probability among its active indicators (1 for the empty model).
inline std::vector<double> implied_cutoffs(const InclusionReport& report,
                                           const std::vector<ModelIndicator>& candidates) {
  std::vector<double> out;
  for (const auto& m : candidates) {
    double c = 1.0;
    for (std::size_t i = 0; i < 2 * m.size(); ++i)
      if (m.flat(i))
        c = std::min(c, report.flat(i));
    out.push_back(c);
  }
  return out;
}

struct CvOptions {
  bool nugget_allowed = true;
  std::size_t threads = 1;
  /// Fraction of failed folds above which a candidate is disqualified.
  double max_failed_fraction = 0.25;
  FitOptions fit;
};

struct CvReport {
  std::vector<ModelIndicator> candidates;
  std::vector<double> cv_rmspe;  ///< mean of per-fold RMSPE
  std::vector<double> cv_se;     ///< standard error of the per-fold RMSPE
  std::vector<std::vector<double>> fold_rmspe;
  std::vector<std::size_t> failed_folds;
  std::vector<std::uint8_t> disqualified;
  std::size_t chosen = 0;         ///< minimum mean CV error
  std::size_t chosen_one_se = 0;  ///< sparsest candidate within one SE of the minimum
  std::size_t folds = 0;
};

/// Seeded fold labels with sizes differing by at most one.
inline std::vector<std::size_t> fold_assignment(std::size_t n, std::size_t v, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  std::vector<std::size_t> fold(n);
  for (std::size_t k = 0; k < n; ++k)
    fold[order[k]] = k % v;
  return fold;
}

inline CvReport cross_validate(const Dataset& data, const std::vector<ModelIndicator>& candidates,
                               std::size_t v, std::uint64_t seed, const CvOptions& opt = {}) {
  data.validate();
  const auto n = static_cast<std::size_t>(data.rows());
  if (v < 2 || v > n)
    throw InvalidArgument("fold count must satisfy 2 <= v <= n");
  if (candidates.empty())
    throw InvalidArgument("no candidate models to cross-validate");

  const auto fold = fold_assignment(n, v, seed);
  std::vector<Dataset> train(v), test(v);
  for (std::size_t f = 0; f < v; ++f) {
    std::vector<Eigen::Index> tr, te;
    for (std::size_t i = 0; i < n; ++i)
      (fold[i] == f ? te : tr).push_back(static_cast<Eigen::Index>(i));
    train[f] = data.subset(tr);
    test[f] = data.subset(te);
  }

  const std::size_t nc = candidates.size();
  std::vector<std::optional<double>> err(nc * v);
  std::vector<std::string> failures(nc * v);
  parallel_for(nc * v, opt.threads, [&](std::size_t job) {
    const std::size_t c = job / v, f = job % v;
    try {
      const MleFit fit = fit_mle(train[f], candidates[c], opt.nugget_allowed, opt.fit);
      const Eigen::VectorXd pred = predict_mle(fit, train[f], PredictionRequest{test[f].x});
      const double e = rmspe(test[f].y, pred);
      if (std::isfinite(e))
        err[job] = e;
      else
        failures[job] = "non-finite prediction error";
    } catch (const std::exception& e) {
      failures[job] = e.what();
    }
  });

  CvReport r;
  r.candidates = candidates;
  r.folds = v;
  for (std::size_t c = 0; c < nc; ++c) {
    std::vector<double> ok;
    std::size_t failed = 0;
    for (std::size_t f = 0; f < v; ++f) {
      const auto& e = err[c * v + f];
      if (e) {
        ok.push_back(*e);
      } else {
        ++failed;
        warn("candidate " + candidates[c].to_string() + " failed on fold " + std::to_string(f) +
             ": " + failures[c * v + f]);
      }
    }
    const bool dq = ok.empty() || static_cast<double>(failed) > opt.max_failed_fraction * static_cast<double>(v);
    double mean = std::numeric_limits<double>::infinity(), se = 0.0;
    if (!ok.empty()) {
      mean = std::accumulate(ok.begin(), ok.end(), 0.0) / static_cast<double>(ok.size());
      if (ok.size() > 1) {
        double ss = 0.0;
        for (double e : ok)
          ss += (e - mean) * (e - mean);
        se = std::sqrt(ss / static_cast<double>(ok.size() - 1)) /
             std::sqrt(static_cast<double>(ok.size()));
      }
    }
    r.cv_rmspe.push_back(mean);
    r.cv_se.push_back(se);
    r.fold_rmspe.push_back(std::move(ok));
    r.failed_folds.push_back(failed);
    r.disqualified.push_back(dq);
  }

  // Ties are broken by sparsity, then by the indicator vectors themselves, so
  // the choice does not depend on candidate order.
  auto better = [&](std::size_t a, std::size_t b) {
    if (r.cv_rmspe[a] != r.cv_rmspe[b])
      return r.cv_rmspe[a] < r.cv_rmspe[b];
    if (candidates[a].active_count() != candidates[b].active_count())
      return candidates[a].active_count() < candidates[b].active_count();
    return candidates[a] < candidates[b];
  };
  std::optional<std::size_t> best;
  for (std::size_t c = 0; c < nc; ++c)
    if (!r.disqualified[c] && (!best || better(c, *best)))
      best = c;
  if (!best)
    throw OptimizationFailure("every candidate model was disqualified during cross-validation", {});
  r.chosen = *best;

  const double limit = r.cv_rmspe[*best] + r.cv_se[*best];
  std::size_t sparse = *best;
  for (std::size_t c = 0; c < nc; ++c) {
    if (r.disqualified[c] || r.cv_rmspe[c] > limit)
      continue;
    const auto ka = candidates[c].active_count(), kb = candidates[sparse].active_count();
    if (ka < kb || (ka == kb && better(c, sparse)))
      sparse = c;
  }
  r.chosen_one_se = sparse;
  return r;
}

} // namespace gpvs
