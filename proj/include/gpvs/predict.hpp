#pragma once

#include "gpvs/dataset.hpp"
#include "gpvs/errors.hpp"
#include "gpvs/kernel.hpp"
#include "gpvs/optimize.hpp"
#include "gpvs/parallel.hpp"
#include "gpvs/sampler.hpp"
#include "gpvs/state.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace gpvs {

struct PredictionRequest {
  Eigen::MatrixXd sites;  ///< m x p, on the training scale

  Eigen::Index size() const { return sites.rows(); }

  void validate(Eigen::Index p) const {
    if (sites.rows() > 0 && sites.cols() != p)
      throw InvalidArgument("prediction sites have " + std::to_string(sites.cols()) +
                            " columns, expected " + std::to_string(p));
    if (!sites.allFinite())
      throw InvalidArgument("prediction sites contain non-finite values");
  }
};

// ---------------------------------------------------------------------------
// Conditional-mean prediction and model averaging

/// E[y_new | y, state] = intercept + X_new beta + R_new,old (R + nugget I)^{-1} (y - intercept - X beta).
/// A zero nugget is accepted here, giving the interpolating predictor.
inline Eigen::VectorXd conditional_mean(const Dataset& data, const ParameterState& s,
                                        const PredictionRequest& req) {
  req.validate(data.cols());
  if (req.size() == 0)
    return Eigen::VectorXd(0);
  const CorrelationParams params(s.rho);
  const Eigen::VectorXd resid = trend_residual(data, s);
  const KernelMatrix r = correlation_matrix(data.x, params);
  const Eigen::VectorXd weights = r.factor(s.nugget).solve(resid);
  const Eigen::MatrixXd cross = cross_correlation(req.sites, data.x, params);
  return (req.sites * s.beta + cross * weights).array() + s.intercept;
}

struct AveragedPrediction {
  Eigen::VectorXd mean;
  std::size_t ensemble_size = 0;
};

/// Accumulates per-model sums of conditional means, so that models can be
/// dropped by empirical frequency after the fact.
class ModelAverager {
public:
  explicit ModelAverager(Eigen::Index m = 0) : m_(m) {}

  void add(const ModelIndicator& model, const Eigen::VectorXd& prediction) {
    auto [it, inserted] = entries_.try_emplace(model);
    if (inserted)
      it->second.sum = Eigen::VectorXd::Zero(m_);
    it->second.sum += prediction;
    ++it->second.count;
    ++total_;
  }

  std::size_t total() const { return total_; }

  /// Average over draws whose model frequency is at least `threshold`.
  AveragedPrediction result(double threshold = 0.0) const {
    if (threshold < 0.0 || threshold >= 1.0)
      throw InvalidArgument("denoising threshold must lie in [0, 1)");
    AveragedPrediction out{Eigen::VectorXd::Zero(m_), 0};
    for (const auto& [model, e] : entries_) {
      const double freq = static_cast<double>(e.count) / static_cast<double>(total_);
      if (freq < threshold)
        continue;
      out.mean += e.sum;
      out.ensemble_size += e.count;
    }
    if (out.ensemble_size == 0)
      throw EmptyEnsemble("every draw was removed by the denoising threshold");
    out.mean /= static_cast<double>(out.ensemble_size);
    return out;
  }

private:
  struct Entry {
    Eigen::VectorXd sum;
    std::size_t count = 0;
  };
  Eigen::Index m_;
  std::map<ModelIndicator, Entry> entries_;
  std::size_t total_ = 0;
};

/// Chain observer that predicts as draws arrive. A draw identical to the
/// previous one (a rejected proposal) reuses the previous prediction.
class StreamingAverager {
public:
  StreamingAverager(const Dataset& data, PredictionRequest req)
      : data_(&data), req_(std::move(req)), averager_(req_.size()) {
    req_.validate(data.cols());
  }

  void operator()(const Draw& d) {
    if (!last_ || !same_prediction_inputs(last_->state, d.state)) {
      last_prediction_ = conditional_mean(*data_, d.state, req_);
      last_ = d;
      ++evaluations_;
    }
    averager_.add(d.model, last_prediction_);
  }

  const ModelAverager& averager() const { return averager_; }
  std::size_t evaluations() const { return evaluations_; }

private:
  static bool same_prediction_inputs(const ParameterState& a, const ParameterState& b) {
    return a.intercept == b.intercept && a.nugget == b.nugget && a.beta == b.beta && a.rho == b.rho;
  }

  const Dataset* data_;
  PredictionRequest req_;
  ModelAverager averager_;
  std::optional<Draw> last_;
  Eigen::VectorXd last_prediction_;
  std::size_t evaluations_ = 0;
};

/// Model-averaged prediction over the chain, optionally dropping draws whose
/// model has empirical posterior probability below `denoise_threshold`.
inline AveragedPrediction model_average(const Chain& chain, const Dataset& data,
                                        const PredictionRequest& req,
                                        double denoise_threshold = 0.0) {
  if (chain.empty())
    throw EmptyEnsemble("cannot average over an empty chain");
  StreamingAverager stream(data, req);
  for (const auto& d : chain.draws)
    stream(d);
  return stream.averager().result(denoise_threshold);
}

// ---------------------------------------------------------------------------
// Plug-in kriging with nugget for a fixed model

struct FitOptions {
  int n_starts = 5;
  std::uint64_t seed = 0x5eedULL;
  double rho_lower = 1e-6;
  double rho_upper = 1.0 - 1e-6;
  double log_nugget_lower = -12.0;
  double log_nugget_upper = 3.0;
  double sigma2_floor = 1e-12;
  /// Nugget-free fits only: correlation matrices past this condition number
  /// (or needing jitter) are treated as infeasible, since the interpolator
  /// is no longer numerically meaningful there.
  double max_condition = 1e8;
  std::size_t threads = 1;
  QuasiNewtonOptions search;
};

/// Intercept column followed by the linearly active covariates.
inline Eigen::MatrixXd trend_basis(const Eigen::MatrixXd& x, const ModelIndicator& model) {
  Eigen::MatrixXd f(x.rows(), 1 + static_cast<Eigen::Index>(model.linear_count()));
  f.col(0).setOnes();
  Eigen::Index c = 1;
  for (std::size_t j = 0; j < model.size(); ++j)
    if (model.linear[j])
      f.col(c++) = x.col(static_cast<Eigen::Index>(j));
  return f;
}

/// Generalized least squares at fixed correlation parameters and nugget.
struct GlsSolution {
  Eigen::VectorXd coef;  ///< intercept then active coefficients
  double sigma2 = 0.0;
  double log_det = 0.0;
  double objective = 0.0;  ///< n log sigma2 + log|R + nugget I|
  double jitter = 0.0;
  double rcond = 1.0;
  bool degenerate = false;
};

/// True when the model has no correlation structure and no nugget, in which
/// case the fit is ordinary least squares.
inline bool is_pure_regression(const ModelIndicator& model, double nugget) {
  return model.spatial_count() == 0 && nugget == 0.0;
}

inline GlsSolution profile_gls(const Dataset& data, const ModelIndicator& model,
                               const Eigen::VectorXd& rho, double nugget,
                               const FitOptions& opt = {}) {
  if (static_cast<Eigen::Index>(model.size()) != data.cols() || rho.size() != data.cols())
    throw InvalidArgument("model dimension does not match the dataset");
  const auto n = static_cast<double>(data.rows());
  const Eigen::MatrixXd f = trend_basis(data.x, model);
  GlsSolution out;
  Eigen::MatrixXd wf;
  Eigen::VectorXd wy;
  if (is_pure_regression(model, nugget)) {
    wf = f;
    wy = data.y;
  } else {
    const KernelMatrix r = correlation_matrix(data.x, CorrelationParams(rho));
    const CholeskyFactor& fac = r.factor(nugget);
    wf = fac.whiten(f);
    wy = fac.whiten(data.y);
    out.log_det = fac.log_det();
    out.jitter = fac.jitter();
    out.rcond = fac.rcond();
  }
  out.coef = wf.completeOrthogonalDecomposition().solve(wy);
  out.sigma2 = (wy - wf * out.coef).squaredNorm() / n;
  if (!(out.sigma2 >= opt.sigma2_floor)) {
    out.sigma2 = opt.sigma2_floor;
    out.degenerate = true;
  }
  out.objective = n * std::log(out.sigma2) + out.log_det;
  return out;
}

struct MleFit {
  ModelIndicator model;
  double intercept = 0.0;
  Eigen::VectorXd beta;  ///< length p, zero where inactive
  Eigen::VectorXd rho;   ///< length p, one where inactive
  double nugget = 0.0;
  double sigma2 = 0.0;
  double objective = 0.0;
  double neg_log_lik = 0.0;
  bool degenerate = false;
  bool nugget_allowed = true;
  bool converged = false;
};

namespace detail {

inline double rho_to_search(double rho) { return std::log(-std::log(rho)); }
inline double search_to_rho(double s) { return std::exp(-std::exp(s)); }

inline MleFit assemble_fit(const Dataset& data, const ModelIndicator& model,
                           const Eigen::VectorXd& rho, double nugget, const GlsSolution& g,
                           bool nugget_allowed) {
  MleFit fit;
  fit.model = model;
  fit.intercept = g.coef(0);
  fit.beta = Eigen::VectorXd::Zero(data.cols());
  Eigen::Index c = 1;
  for (std::size_t j = 0; j < model.size(); ++j)
    if (model.linear[j])
      fit.beta(static_cast<Eigen::Index>(j)) = g.coef(c++);
  fit.rho = rho;
  fit.nugget = nugget;
  fit.sigma2 = g.sigma2;
  fit.objective = g.objective;
  const auto n = static_cast<double>(data.rows());
  fit.neg_log_lik = 0.5 * (g.objective + n * (1.0 + std::log(2.0 * std::numbers::pi)));
  fit.degenerate = g.degenerate;
  fit.nugget_allowed = nugget_allowed;
  return fit;
}

} // namespace detail

/// Maximizes the concentrated likelihood over the active correlation
/// parameters and (optionally) the nugget ratio by multi-start bounded
/// quasi-Newton search. Correlations are searched as log(-log rho).
inline MleFit fit_mle(const Dataset& data, const ModelIndicator& model, bool nugget_allowed,
                      const FitOptions& opt = {}) {
  data.validate();
  if (static_cast<Eigen::Index>(model.size()) != data.cols())
    throw InvalidArgument("model dimension does not match the dataset");
  if (opt.n_starts < 1)
    throw InvalidArgument("at least one optimizer start is required");

  std::vector<Eigen::Index> active;
  for (std::size_t j = 0; j < model.size(); ++j)
    if (model.spatial[j])
      active.push_back(static_cast<Eigen::Index>(j));
  const auto na = static_cast<Eigen::Index>(active.size());
  const Eigen::Index dim = na + (nugget_allowed ? 1 : 0);

  auto unpack = [&](const Eigen::VectorXd& z) {
    Eigen::VectorXd rho = Eigen::VectorXd::Ones(data.cols());
    for (Eigen::Index a = 0; a < na; ++a)
      rho(active[static_cast<std::size_t>(a)]) = detail::search_to_rho(z(a));
    const double nugget = nugget_allowed ? std::exp(z(na)) : 0.0;
    return std::pair{rho, nugget};
  };

  if (dim == 0) {
    const Eigen::VectorXd rho = Eigen::VectorXd::Ones(data.cols());
    auto fit = detail::assemble_fit(data, model, rho, 0.0, profile_gls(data, model, rho, 0.0, opt),
                                    false);
    fit.converged = true;
    return fit;
  }

  Box box{Eigen::VectorXd(dim), Eigen::VectorXd(dim)};
  for (Eigen::Index a = 0; a < na; ++a) {
    box.lower(a) = detail::rho_to_search(opt.rho_upper);
    box.upper(a) = detail::rho_to_search(opt.rho_lower);
  }
  if (nugget_allowed) {
    box.lower(na) = opt.log_nugget_lower;
    box.upper(na) = opt.log_nugget_upper;
  }

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Eigen::VectorXd> starts;
  for (int s = 0; s < opt.n_starts; ++s) {
    Eigen::VectorXd z(dim);
    for (Eigen::Index a = 0; a < na; ++a)
      z(a) = detail::rho_to_search(opt.rho_lower + (opt.rho_upper - opt.rho_lower) * unif(rng));
    if (nugget_allowed)
      z(na) = opt.log_nugget_lower + (opt.log_nugget_upper - opt.log_nugget_lower) * unif(rng);
    starts.push_back(box.project(z));
  }

  auto evaluate = [&](const Eigen::VectorXd& z) {
    const auto [rho, nugget] = unpack(z);
    try {
      const GlsSolution g = profile_gls(data, model, rho, nugget, opt);
      if (!nugget_allowed && (g.jitter > 0.0 || g.rcond * opt.max_condition < 1.0))
        return std::numeric_limits<double>::infinity();
      return g.objective;
    } catch (const NumericalSingularity&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  std::vector<MinimizeResult> results(starts.size());
  std::vector<std::vector<std::vector<double>>> traces(starts.size());
  parallel_for(starts.size(), opt.threads, [&](std::size_t s) {
    auto objective = [&](const Eigen::VectorXd& z) {
      if (traces[s].size() < 64)
        traces[s].emplace_back(z.data(), z.data() + z.size());
      return evaluate(z);
    };
    Eigen::VectorXd z0 = starts[s];
    // without a nugget, pull infeasible starts toward the rough corner
    // (smallest rho), where R is closest to the identity
    for (int k = 0; k < 40 && !nugget_allowed && !std::isfinite(objective(z0)); ++k)
      z0 = 0.5 * (z0 + box.upper);
    results[s] = minimize_box(objective, z0, box, opt.search);
  });

  std::size_t best = 0;
  for (std::size_t s = 1; s < results.size(); ++s)
    if (results[s].value < results[best].value)
      best = s;
  if (!std::isfinite(results[best].value)) {
    std::vector<std::vector<double>> trace;
    for (auto& t : traces)
      trace.insert(trace.end(), t.begin(), t.end());
    std::string why = "profile likelihood is not finite at any evaluated point for model " +
                      model.to_string();
    if (!nugget_allowed)
      why += "; without a nugget the correlation matrix must stay below condition number " +
             std::to_string(opt.max_condition) + " somewhere in the rho box";
    throw OptimizationFailure(why, std::move(trace));
  }
  const auto [rho, nugget] = unpack(results[best].x);
  auto fit = detail::assemble_fit(data, model, rho, nugget, profile_gls(data, model, rho, nugget, opt),
                                  nugget_allowed);
  fit.converged = results[best].converged;
  return fit;
}

/// Plug-in kriging predictor: trend at the estimated coefficients plus the
/// correlation-weighted trend residual.
inline Eigen::VectorXd predict_mle(const MleFit& fit, const Dataset& data,
                                   const PredictionRequest& req) {
  req.validate(data.cols());
  if (static_cast<Eigen::Index>(fit.model.size()) != data.cols())
    throw InvalidArgument("fit was produced for a different covariate count");
  if (req.size() == 0)
    return Eigen::VectorXd(0);
  Eigen::VectorXd trend_new = (req.sites * fit.beta).array() + fit.intercept;
  if (is_pure_regression(fit.model, fit.nugget))
    return trend_new;
  const CorrelationParams params(fit.rho);
  const Eigen::VectorXd resid = data.y - data.x * fit.beta -
                                Eigen::VectorXd::Constant(data.rows(), fit.intercept);
  const KernelMatrix r = correlation_matrix(data.x, params);
  const Eigen::VectorXd weights = r.factor(fit.nugget).solve(resid);
  return trend_new + cross_correlation(req.sites, data.x, params) * weights;
}

} // namespace gpvs
