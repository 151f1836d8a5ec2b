#pragma once

#include "gpvs/errors.hpp"
#include "gpvs/model.hpp"
#include "gpvs/sampler.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>

namespace gpvs {

struct PredictConfig {
  double denoise_threshold = 0.0;
};

struct SelectConfig {
  double low = 0.30;
  double high = 0.90;
  double q = 0.8;
  std::size_t v_folds = 8;
};

struct DataConfig {
  std::string train;
  std::string validation;
  std::string sites;
  std::string response = "y";
  bool standardize = true;
};

/// Parameters of the synthetic five-covariate study.
struct SimulateConfig {
  std::size_t n_train = 35;
  std::size_t n_validation = 100;
  double lower = -0.75;
  double upper = 0.75;
  double noise_sd = 0.1;
  std::size_t lhd_restarts = 10;
  std::uint64_t seed = 2024;
};

struct RunConfig {
  PriorConfig prior;
  SamplerConfig sampler;
  std::size_t chains = 1;
  PredictConfig predict;
  SelectConfig select;
  DataConfig data;
  SimulateConfig simulate;

  void validate() const {
    prior.validate();
    sampler.validate();
    if (chains < 1)
      throw InvalidArgument("config: chains must be at least 1");
    if (predict.denoise_threshold < 0.0 || predict.denoise_threshold >= 1.0)
      throw InvalidArgument("config: predict.denoise_threshold must lie in [0, 1)");
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(select.low) || !unit(select.high) || !(select.low < select.high))
      throw InvalidArgument("config: select.low/high must satisfy 0 <= low < high <= 1");
    if (!(select.q > 0.0 && select.q < 1.0))
      throw InvalidArgument("config: select.q must lie in (0, 1)");
    if (select.v_folds < 2)
      throw InvalidArgument("config: select.v_folds must be at least 2");
    if (simulate.n_train < 2 || simulate.n_validation < 2)
      throw InvalidArgument("config: simulation designs need at least 2 runs");
    if (!(simulate.upper > simulate.lower))
      throw InvalidArgument("config: simulate.lower must be below simulate.upper");
    if (simulate.noise_sd < 0.0)
      throw InvalidArgument("config: simulate.noise_sd must be non-negative");
  }
};

namespace detail {
template <class T> void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null())
    out = j.at(key).get<T>();
}
} // namespace detail

/// Missing keys keep their defaults. Unknown keys are rejected so typos do
/// not silently fall back to defaults.
inline RunConfig config_from_json(const nlohmann::json& j) {
  using detail::read_opt;
  auto check_keys = [](const nlohmann::json& obj, std::initializer_list<const char*> known,
                       const std::string& where) {
    if (!obj.is_object())
      throw InvalidArgument("config: '" + where + "' must be an object");
    for (const auto& [k, v] : obj.items()) {
      bool ok = false;
      for (const char* n : known)
        ok = ok || k == n;
      if (!ok)
        throw InvalidArgument("config: unknown key '" + where + "." + k + "'");
    }
  };
  RunConfig c;
  check_keys(j, {"prior", "sampler", "predict", "select", "data", "simulate"}, "<root>");
  if (j.contains("prior")) {
    const auto& p = j["prior"];
    check_keys(p, {"tau", "beta0_sd", "sigma2_shape", "sigma2_scale", "lambda_shape", "lambda_scale"},
               "prior");
    read_opt(p, "tau", c.prior.tau);
    read_opt(p, "beta0_sd", c.prior.beta0_sd);
    read_opt(p, "sigma2_shape", c.prior.sigma2_shape);
    read_opt(p, "sigma2_scale", c.prior.sigma2_scale);
    read_opt(p, "lambda_shape", c.prior.lambda_shape);
    read_opt(p, "lambda_scale", c.prior.lambda_scale);
  }
  if (j.contains("sampler")) {
    const auto& s = j["sampler"];
    check_keys(s, {"n_iter", "burn_in", "nu", "jitter_sd_beta", "jitter_sd_rho", "rw_sd", "seed", "thin",
                   "jitter_on_pure_walk", "hastings_correction", "chains"},
               "sampler");
    read_opt(s, "n_iter", c.sampler.n_iter);
    read_opt(s, "burn_in", c.sampler.burn_in);
    read_opt(s, "nu", c.sampler.flip_rate);
    read_opt(s, "jitter_sd_beta", c.sampler.jitter_sd_beta);
    read_opt(s, "jitter_sd_rho", c.sampler.jitter_sd_rho);
    if (s.contains("rw_sd")) {
      const auto v = s["rw_sd"].get<std::vector<double>>();
      if (v.size() != 5)
        throw InvalidArgument("config: sampler.rw_sd needs 5 entries");
      std::copy(v.begin(), v.end(), c.sampler.rw_sd.begin());
    }
    read_opt(s, "seed", c.sampler.seed);
    read_opt(s, "thin", c.sampler.thin);
    read_opt(s, "jitter_on_pure_walk", c.sampler.jitter_on_pure_walk);
    read_opt(s, "hastings_correction", c.sampler.hastings_correction);
    read_opt(s, "chains", c.chains);
  }
  if (j.contains("predict")) {
    check_keys(j["predict"], {"denoise_threshold"}, "predict");
    read_opt(j["predict"], "denoise_threshold", c.predict.denoise_threshold);
  }
  if (j.contains("select")) {
    const auto& s = j["select"];
    check_keys(s, {"low", "high", "q", "v_folds"}, "select");
    read_opt(s, "low", c.select.low);
    read_opt(s, "high", c.select.high);
    read_opt(s, "q", c.select.q);
    read_opt(s, "v_folds", c.select.v_folds);
  }
  if (j.contains("data")) {
    const auto& d = j["data"];
    check_keys(d, {"train", "validation", "sites", "response", "standardize"}, "data");
    read_opt(d, "train", c.data.train);
    read_opt(d, "validation", c.data.validation);
    read_opt(d, "sites", c.data.sites);
    read_opt(d, "response", c.data.response);
    read_opt(d, "standardize", c.data.standardize);
  }
  if (j.contains("simulate")) {
    const auto& s = j["simulate"];
    check_keys(s, {"n_train", "n_validation", "lower", "upper", "noise_sd", "lhd_restarts", "seed"},
               "simulate");
    read_opt(s, "n_train", c.simulate.n_train);
    read_opt(s, "n_validation", c.simulate.n_validation);
    read_opt(s, "lower", c.simulate.lower);
    read_opt(s, "upper", c.simulate.upper);
    read_opt(s, "noise_sd", c.simulate.noise_sd);
    read_opt(s, "lhd_restarts", c.simulate.lhd_restarts);
    read_opt(s, "seed", c.simulate.seed);
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw InvalidArgument("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, 1, e.what());
  }
  try {
    return config_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, 1, e.what());
  }
}

inline nlohmann::json config_to_json(const RunConfig& c) {
  const auto& s = c.sampler;
  return {
      {"prior",
       {{"tau", c.prior.tau},
        {"beta0_sd", c.prior.beta0_sd},
        {"sigma2_shape", c.prior.sigma2_shape},
        {"sigma2_scale", c.prior.sigma2_scale},
        {"lambda_shape", c.prior.lambda_shape},
        {"lambda_scale", c.prior.lambda_scale}}},
      {"sampler",
       {{"n_iter", s.n_iter},
        {"burn_in", s.burn_in},
        {"nu", s.flip_rate},
        {"jitter_sd_beta", s.jitter_sd_beta},
        {"jitter_sd_rho", s.jitter_sd_rho},
        {"rw_sd", std::vector<double>(s.rw_sd.begin(), s.rw_sd.end())},
        {"seed", s.seed},
        {"thin", s.thin},
        {"jitter_on_pure_walk", s.jitter_on_pure_walk},
        {"hastings_correction", s.hastings_correction},
        {"chains", c.chains}}},
      {"predict", {{"denoise_threshold", c.predict.denoise_threshold}}},
      {"select",
       {{"low", c.select.low}, {"high", c.select.high}, {"q", c.select.q}, {"v_folds", c.select.v_folds}}},
      {"data",
       {{"train", c.data.train},
        {"validation", c.data.validation},
        {"sites", c.data.sites},
        {"response", c.data.response},
        {"standardize", c.data.standardize}}},
      {"simulate",
       {{"n_train", c.simulate.n_train},
        {"n_validation", c.simulate.n_validation},
        {"lower", c.simulate.lower},
        {"upper", c.simulate.upper},
        {"noise_sd", c.simulate.noise_sd},
        {"lhd_restarts", c.simulate.lhd_restarts},
        {"seed", c.simulate.seed}}}};
}

} // namespace gpvs
