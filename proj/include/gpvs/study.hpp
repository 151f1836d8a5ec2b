#pragma once

#include "gpvs/config.hpp"
#include "gpvs/dataset.hpp"
#include "gpvs/design.hpp"
#include "gpvs/predict.hpp"
#include "gpvs/sampler.hpp"
#include "gpvs/select.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace gpvs {

struct SimulatedStudy {
  Dataset train;
  Dataset validation;
};

/// Training and validation sets for the five-covariate test function, each on
/// its own maximin LHD. Values stay on the design box (no standardization).
inline SimulatedStudy simulate_study(const SimulateConfig& cfg) {
  const Interval box{cfg.lower, cfg.upper};
  std::mt19937_64 noise(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  auto make = [&](std::size_t n, std::uint64_t seed) {
    const LhdDesign d = maximin_lhd(n, 5, box, seed, cfg.lhd_restarts);
    Eigen::VectorXd y(d.points.rows());
    for (Eigen::Index i = 0; i < d.points.rows(); ++i)
      y(i) = sim_response(d.points.row(i), cfg.noise_sd, noise);
    return make_dataset(d.points, y);
  };
  SimulatedStudy s;
  s.train = make(cfg.n_train, cfg.seed);
  s.validation = make(cfg.n_validation, cfg.seed + 1);
  return s;
}

struct BenchmarkRow {
  std::string method;
  double rmspe = 0.0;
  ModelIndicator model;      ///< empty for the averaging row
  std::size_t ensemble = 0;  ///< draws averaged (averaging row only)
};

struct BenchmarkResult {
  std::vector<BenchmarkRow> rows;  ///< OK, UK, Averaging, PosteriorInclusion, MAP
  InclusionReport inclusion;
  double acceptance_rate = 0.0;

  const BenchmarkRow& row(const std::string& method) const {
    for (const auto& r : rows)
      if (r.method == method)
        return r;
    throw InvalidArgument("no benchmark row '" + method + "'");
  }
};

inline const std::vector<std::string>& benchmark_methods() {
  static const std::vector<std::string> names{"OK", "UK", "Averaging", "PosteriorInclusion", "MAP"};
  return names;
}

/// Runs the sampler on `train` and scores five predictors on `validation`:
/// ordinary and universal kriging, the model average, the model built from
/// inclusion probabilities >= q, and the most frequent model. Every fixed
/// model is fitted by maximum likelihood with a nugget.
inline BenchmarkResult run_benchmark(const Dataset& train, const Dataset& validation,
                                     const RunConfig& cfg, std::size_t threads = 1,
                                     Chain* chain_out = nullptr) {
  const PredictionRequest req{validation.x};
  StreamingAverager stream(train, req);
  Chain chain = run_chain(train, cfg.prior, cfg.sampler, GaussianLikelihood{}, stream);
  BenchmarkResult res;
  res.inclusion = inclusion_probabilities(chain);
  res.acceptance_rate = chain.acceptance_rate();
  const auto p = static_cast<std::size_t>(train.cols());

  FitOptions fo;
  fo.threads = threads;
  auto score_model = [&](const std::string& name, const ModelIndicator& m) {
    const MleFit fit = fit_mle(train, m, true, fo);
    res.rows.push_back({name, rmspe(validation.y, predict_mle(fit, train, req)), m, 0});
  };
  score_model("OK", ModelIndicator::ordinary_kriging(p));
  score_model("UK", ModelIndicator::universal_kriging(p));
  const AveragedPrediction avg = stream.averager().result(cfg.predict.denoise_threshold);
  res.rows.push_back({"Averaging", rmspe(validation.y, avg.mean), ModelIndicator{}, avg.ensemble_size});
  score_model("PosteriorInclusion", threshold_model(res.inclusion, cfg.select.q));
  score_model("MAP", map_model(res.inclusion));
  if (chain_out)
    *chain_out = std::move(chain);
  return res;
}

} // namespace gpvs
