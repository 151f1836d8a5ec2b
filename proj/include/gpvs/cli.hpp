#pragma once

#include "gpvs/config.hpp"
#include "gpvs/dataset.hpp"
#include "gpvs/errors.hpp"
#include "gpvs/io.hpp"
#include "gpvs/log.hpp"
#include "gpvs/predict.hpp"
#include "gpvs/sampler.hpp"
#include "gpvs/select.hpp"
#include "gpvs/study.hpp"

#include <json.hpp>

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace gpvs::cli {

namespace fs = std::filesystem;
using nlohmann::json;

/// Settings shared by every subcommand.
struct Context {
  RunConfig cfg;
  fs::path out_dir = ".";
  std::size_t threads = 1;
};

/// Exclusive claim on an output directory, released on destruction.
class OutputLock {
public:
  explicit OutputLock(const fs::path& dir) : path_(dir / ".gpvs.lock") {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      if (errno == EEXIST)
        throw InvalidArgument("output directory '" + dir.string() +
                              "' is locked by another run (remove " + path_.string() +
                              " if stale)");
      throw InvalidArgument("cannot create lock file " + path_.string() + ": " +
                            std::strerror(errno));
    }
  }
  ~OutputLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

private:
  fs::path path_;
  int fd_ = -1;
};

inline void prepare_output(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw InvalidArgument("cannot create output directory '" + dir.string() + "'");
}

inline std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw InvalidArgument("cannot write '" + path.string() + "'");
  return out;
}

inline void write_json(const fs::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

/// Timestamps live here and nowhere else, so the other outputs stay
/// byte-identical across runs.
inline void write_run_meta(const Context& ctx, const std::string& command) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  write_json(ctx.out_dir / "run_meta.json",
             {{"command", command}, {"timestamp", buf}, {"threads", ctx.threads},
              {"config", config_to_json(ctx.cfg)}});
}

/// "ok", "uk", "none" or the compact form "L:0110|S:1100".
inline ModelIndicator parse_model(const std::string& spec, std::size_t p) {
  if (spec == "ok")
    return ModelIndicator::ordinary_kriging(p);
  if (spec == "uk" || spec == "full")
    return ModelIndicator::universal_kriging(p);
  if (spec == "none")
    return ModelIndicator(p);
  const auto bar = spec.find('|');
  if (spec.rfind("L:", 0) != 0 || bar == std::string::npos || spec.compare(bar + 1, 2, "S:") != 0)
    throw InvalidArgument("model '" + spec + "' is not 'ok', 'uk', 'none' or of the form L:...|S:...");
  auto bits = [&](std::string_view s) {
    if (s.size() != p)
      throw InvalidArgument("model '" + spec + "' needs " + std::to_string(p) +
                            " indicators per part");
    std::vector<std::uint8_t> out;
    for (char c : s) {
      if (c != '0' && c != '1')
        throw InvalidArgument("model '" + spec + "' contains '" + std::string(1, c) + "'");
      out.push_back(c == '1');
    }
    return out;
  };
  const std::string_view sv(spec);
  return {bits(sv.substr(2, bar - 2)), bits(sv.substr(bar + 3))};
}

inline std::string require_path(const std::string& given, const std::string& fallback,
                                const char* what) {
  const std::string& p = given.empty() ? fallback : given;
  if (p.empty())
    throw InvalidArgument(std::string("no ") + what + " given");
  return p;
}

inline Dataset load_training(const Context& ctx, const std::string& path) {
  return ingest(require_path(path, ctx.cfg.data.train, "training data"), ctx.cfg.data.response,
                ctx.cfg.data.standardize);
}

/// Reads new sites and maps them onto the training scale.
inline Eigen::MatrixXd load_sites(const Dataset& train, const std::string& path) {
  const csv::Table t = csv::read_table(path);
  const auto names = train.column_names.empty() ? default_column_names(train.cols()) : train.column_names;
  Eigen::MatrixXd sites = sites_from_table(t, path, names);
  if (const auto outside = train.standardize_sites(sites))
    warn(std::to_string(outside) + " site coordinate(s) in '" + path +
         "' fall outside the training range; predictions there extrapolate");
  return sites;
}

inline json scaling_json(const Dataset& d) {
  json a = json::array();
  for (std::size_t j = 0; j < d.scaling.size(); ++j)
    a.push_back({{"column", d.column_names[j]}, {"min", d.scaling[j].min}, {"max", d.scaling[j].max}});
  return a;
}

inline void write_predictions(const fs::path& path, const Eigen::VectorXd& pred,
                              std::optional<std::size_t> ensemble) {
  auto out = open_out(path);
  out << "index,prediction" << (ensemble ? ",ensemble_size" : "") << '\n';
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    out << i << ',' << csv::format_double(pred(i));
    if (ensemble)
      out << ',' << *ensemble;
    out << '\n';
  }
}

// ---------------------------------------------------------------------------

inline void cmd_simulate(const Context& ctx) {
  const SimulatedStudy s = simulate_study(ctx.cfg.simulate);
  export_csv(s.train, (ctx.out_dir / "train.csv").string());
  export_csv(s.validation, (ctx.out_dir / "validation.csv").string());
}

struct SampleOptions {
  std::string data;
};

inline Chain cmd_sample(const Context& ctx, const SampleOptions& opt) {
  const Dataset d = load_training(ctx, opt.data);
  const auto& cfg = ctx.cfg;
  Chain chain = cfg.chains > 1 ? run_chains(d, cfg.prior, cfg.sampler, cfg.chains, ctx.threads)
                               : run_chain(d, cfg.prior, cfg.sampler);
  io::write_chain(chain, (ctx.out_dir / "chain.jsonl").string());
  write_json(ctx.out_dir / "sample_summary.json",
             {{"columns", d.column_names},
              {"response", d.response_name},
              {"scaling", scaling_json(d)},
              {"seed", cfg.sampler.seed},
              {"chains", cfg.chains},
              {"iterations", chain.iterations},
              {"stored_draws", chain.size()},
              {"accepted", chain.accepted_total},
              {"acceptance_rate", chain.acceptance_rate()},
              {"singular_proposals", chain.singular_proposals}});
  return chain;
}

struct InclusionOptions {
  std::string chain;
  std::string data;  ///< optional, supplies covariate names
};

inline InclusionReport cmd_inclusion(const Context& ctx, const InclusionOptions& opt) {
  const Chain chain = io::read_chain(require_path(opt.chain, "", "chain file"));
  const InclusionReport r = inclusion_probabilities(chain);
  std::vector<std::string> names = default_column_names(static_cast<Eigen::Index>(r.size()));
  if (!opt.data.empty() || !ctx.cfg.data.train.empty()) {
    const Dataset d = load_training(ctx, opt.data);
    if (static_cast<std::size_t>(d.cols()) != r.size())
      throw InvalidArgument("chain has " + std::to_string(r.size()) + " covariates, data has " +
                            std::to_string(d.cols()));
    names = d.column_names;
  }
  json j = io::to_json(r, names);
  j["map_model"] = io::named_model(map_model(r), names);
  j["threshold_model"] = io::named_model(threshold_model(r, ctx.cfg.select.q), names);
  j["threshold_q"] = ctx.cfg.select.q;
  j["median_model"] = io::named_model(threshold_model(r, 0.5), names);
  write_json(ctx.out_dir / "inclusion.json", j);

  auto out = open_out(ctx.out_dir / "inclusion.csv");
  out << "covariate,component,probability\n";
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t k = 0; k < r.size(); ++k)
      out << csv::quote_if_needed(names[k]) << ',' << (c ? "spatial" : "linear") << ','
          << csv::format_double(r.flat(c * r.size() + k)) << '\n';
  return r;
}

struct SelectOptions {
  std::string chain;
  std::string data;
};

inline CvReport cmd_select(const Context& ctx, const SelectOptions& opt) {
  const Chain chain = io::read_chain(require_path(opt.chain, "", "chain file"));
  const Dataset d = load_training(ctx, opt.data);
  const InclusionReport r = inclusion_probabilities(chain);
  if (static_cast<std::size_t>(d.cols()) != r.size())
    throw InvalidArgument("chain has " + std::to_string(r.size()) + " covariates, data has " +
                          std::to_string(d.cols()));
  const auto& sel = ctx.cfg.select;
  const auto ladder = candidate_ladder(r, sel.low, sel.high);
  const auto cutoffs = implied_cutoffs(r, ladder);
  CvOptions co;
  co.threads = ctx.threads;
  const CvReport cv = cross_validate(d, ladder, sel.v_folds, ctx.cfg.sampler.seed, co);

  json j = io::to_json(cv, d.column_names, cutoffs);
  j["low"] = sel.low;
  j["high"] = sel.high;
  write_json(ctx.out_dir / "cv_report.json", j);

  auto out = open_out(ctx.out_dir / "cv_curve.csv");
  out << "candidate,model,n_active,implied_cutoff,cv_rmspe,cv_se,lower,upper,disqualified,chosen,"
         "chosen_one_se\n";
  for (std::size_t c = 0; c < ladder.size(); ++c) {
    const double m = cv.cv_rmspe[c], se = cv.cv_se[c];
    out << c << ',' << ladder[c].to_string() << ',' << ladder[c].active_count() << ','
        << csv::format_double(cutoffs[c]) << ',' << csv::format_double(m) << ','
        << csv::format_double(se) << ',' << csv::format_double(m - se) << ','
        << csv::format_double(m + se) << ',' << int(cv.disqualified[c] != 0) << ','
        << int(c == cv.chosen) << ',' << int(c == cv.chosen_one_se) << '\n';
  }
  return cv;
}

struct FitCommandOptions {
  std::string data;
  std::string model = "uk";
  bool nugget = true;
};

inline MleFit cmd_fit(const Context& ctx, const FitCommandOptions& opt) {
  const Dataset d = load_training(ctx, opt.data);
  const ModelIndicator m = parse_model(opt.model, static_cast<std::size_t>(d.cols()));
  FitOptions fo;
  fo.threads = ctx.threads;
  const MleFit fit = fit_mle(d, m, opt.nugget, fo);
  json j = io::to_json(fit, d.column_names);
  j["scaling"] = scaling_json(d);
  write_json(ctx.out_dir / "fit.json", j);
  return fit;
}

struct PredictOptions {
  std::string mode = "mle";  ///< "mle" or "average"
  std::string data;
  std::string sites;
  std::string fit;    ///< mode mle
  std::string chain;  ///< mode average
  std::optional<double> denoise_threshold;
};

inline Eigen::VectorXd cmd_predict(const Context& ctx, const PredictOptions& opt) {
  const Dataset d = load_training(ctx, opt.data);
  const PredictionRequest req{load_sites(d, require_path(opt.sites, ctx.cfg.data.sites, "site file"))};
  if (opt.mode == "mle") {
    const std::string path = require_path(opt.fit, "", "fit file");
    std::ifstream in(path);
    if (!in)
      throw InvalidArgument("cannot open '" + path + "'");
    MleFit fit;
    try {
      fit = io::fit_from_json(json::parse(in));
    } catch (const json::exception& e) {
      throw ParseError(path, 1, e.what());
    }
    if (fit.model.size() != static_cast<std::size_t>(d.cols()))
      throw InvalidArgument("fit has " + std::to_string(fit.model.size()) + " covariates, data has " +
                            std::to_string(d.cols()));
    const Eigen::VectorXd pred = predict_mle(fit, d, req);
    write_predictions(ctx.out_dir / "predictions.csv", pred, std::nullopt);
    return pred;
  }
  if (opt.mode == "average") {
    const Chain chain = io::read_chain(require_path(opt.chain, "", "chain file"));
    const double thr = opt.denoise_threshold.value_or(ctx.cfg.predict.denoise_threshold);
    const AveragedPrediction avg = model_average(chain, d, req, thr);
    write_predictions(ctx.out_dir / "predictions.csv", avg.mean, avg.ensemble_size);
    return avg.mean;
  }
  throw InvalidArgument("prediction mode must be 'mle' or 'average', got '" + opt.mode + "'");
}

struct BenchmarkOptions {
  std::string data;        ///< empty: run the synthetic study
  std::string validation;  ///< hold-out file; otherwise a seeded split
  double train_fraction = 0.7;
};

inline BenchmarkResult cmd_benchmark(const Context& ctx, const BenchmarkOptions& opt) {
  const auto& cfg = ctx.cfg;
  Dataset train, valid;
  const std::string data_path = opt.data.empty() ? cfg.data.train : opt.data;
  const std::string valid_path = opt.validation.empty() ? cfg.data.validation : opt.validation;
  if (data_path.empty()) {
    SimulatedStudy s = simulate_study(cfg.simulate);
    train = std::move(s.train);
    valid = std::move(s.validation);
  } else {
    train = ingest(data_path, cfg.data.response, cfg.data.standardize);
    if (!valid_path.empty()) {
      const csv::Table t = csv::read_table(valid_path);
      const auto ycol = t.column(cfg.data.response);
      if (ycol < 0)
        throw ParseError(valid_path, 1, "response column '" + cfg.data.response + "' not found");
      valid = train.subset({});
      valid.x = load_sites(train, valid_path);
      valid.y = t.values.col(ycol);
    } else {
      if (!(opt.train_fraction > 0.0 && opt.train_fraction < 1.0))
        throw InvalidArgument("training fraction must lie in (0, 1)");
      const auto n_train = static_cast<Eigen::Index>(
          std::lround(opt.train_fraction * static_cast<double>(train.rows())));
      std::tie(train, valid) = random_split(train, n_train, cfg.sampler.seed);
    }
  }
  const BenchmarkResult res = run_benchmark(train, valid, cfg, ctx.threads);

  auto out = open_out(ctx.out_dir / "benchmark.csv");
  out << "method,rmspe,model,ensemble_size\n";
  json rows = json::array();
  for (const auto& r : res.rows) {
    const std::string model = r.model.size() ? r.model.to_string() : "";
    out << r.method << ',' << csv::format_double(r.rmspe) << ',' << model << ',' << r.ensemble << '\n';
    rows.push_back({{"method", r.method}, {"rmspe", r.rmspe}, {"model", model}, {"ensemble_size", r.ensemble}});
  }
  write_json(ctx.out_dir / "benchmark.json",
             {{"rows", rows},
              {"n_train", train.rows()},
              {"n_validation", valid.rows()},
              {"acceptance_rate", res.acceptance_rate},
              {"inclusion", io::to_json(res.inclusion, train.column_names)}});
  return res;
}

// ---------------------------------------------------------------------------

/// 0 success, 1 validation error, 2 numerical failure.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericalSingularity*>(&e) || dynamic_cast<const OptimizationFailure*>(&e))
    return 2;
  return 1;
}

inline json error_record(const std::exception& e) {
  std::string type = "error";
  if (dynamic_cast<const ParseError*>(&e))
    type = "parse_error";
  else if (dynamic_cast<const NumericalSingularity*>(&e))
    type = "numerical_singularity";
  else if (dynamic_cast<const OptimizationFailure*>(&e))
    type = "optimization_failure";
  else if (dynamic_cast<const EmptyEnsemble*>(&e))
    type = "empty_ensemble";
  else if (dynamic_cast<const TransformError*>(&e))
    type = "transform_error";
  else if (dynamic_cast<const InvalidState*>(&e))
    type = "invalid_state";
  else if (dynamic_cast<const InvalidArgument*>(&e))
    type = "invalid_argument";
  else if (dynamic_cast<const json::exception*>(&e))
    type = "json_error";
  json j{{"type", type}, {"message", e.what()}, {"exit_code", exit_code_for(e)}};
  if (const auto* p = dynamic_cast<const ParseError*>(&e)) {
    j["file"] = p->source();
    j["line"] = p->line();
  }
  if (const auto* s = dynamic_cast<const NumericalSingularity*>(&e))
    j["attempted_jitters"] = s->attempted_jitters();
  if (const auto* o = dynamic_cast<const OptimizationFailure*>(&e))
    j["evaluated_points"] = o->trace().size();
  return {{"error", j}};
}

} // namespace gpvs::cli
