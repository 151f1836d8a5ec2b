#pragma once

#include "gpvs/errors.hpp"
#include "gpvs/predict.hpp"
#include "gpvs/sampler.hpp"
#include "gpvs/select.hpp"
#include "gpvs/state.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace gpvs::io {

using nlohmann::json;

inline json to_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Eigen::VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline json to_json(const std::vector<std::uint8_t>& bits) {
  json a = json::array();
  for (auto b : bits)
    a.push_back(b ? 1 : 0);
  return a;
}

inline std::vector<std::uint8_t> bits_from_json(const json& j) {
  std::vector<std::uint8_t> out;
  for (const auto& b : j) {
    const int v = b.get<int>();
    if (v != 0 && v != 1)
      throw InvalidArgument("indicator values must be 0 or 1");
    out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

inline json to_json(const ModelIndicator& m) {
  return {{"gamma_r", to_json(m.linear)}, {"gamma_c", to_json(m.spatial)}};
}

inline ModelIndicator model_from_json(const json& j) {
  return {bits_from_json(j.at("gamma_r")), bits_from_json(j.at("gamma_c"))};
}

/// Model with covariate names attached, for human-facing reports.
inline json named_model(const ModelIndicator& m, const std::vector<std::string>& names) {
  json lin = json::array(), spa = json::array();
  for (std::size_t j = 0; j < m.size(); ++j) {
    const std::string name = j < names.size() ? names[j] : "x" + std::to_string(j + 1);
    if (m.linear[j])
      lin.push_back(name);
    if (m.spatial[j])
      spa.push_back(name);
  }
  json out = to_json(m);
  out["linear"] = lin;
  out["spatial"] = spa;
  return out;
}

// ---------------------------------------------------------------------------
// Chains: JSON-Lines, one draw per line

inline json draw_to_json(const Draw& d) {
  const auto& s = d.state;
  json j;
  j["iter"] = d.iter;
  j["gamma_r"] = to_json(d.model.linear);
  j["gamma_c"] = to_json(d.model.spatial);
  j["beta0"] = s.intercept;
  j["beta"] = to_json(s.beta);
  j["rho"] = to_json(s.rho);
  j["sigma2_z"] = s.sigma2;
  j["lambda"] = s.nugget;
  j["omega_r"] = s.omega_linear;
  j["omega_c"] = s.omega_spatial;
  j["log_post"] = d.log_post;
  j["accepted"] = d.accepted;
  return j;
}

inline Draw draw_from_json(const json& j) {
  Draw d;
  d.iter = j.at("iter").get<std::size_t>();
  d.model = {bits_from_json(j.at("gamma_r")), bits_from_json(j.at("gamma_c"))};
  auto& s = d.state;
  s.intercept = j.at("beta0").get<double>();
  s.beta = vector_from_json(j.at("beta"));
  s.rho = vector_from_json(j.at("rho"));
  s.sigma2 = j.at("sigma2_z").get<double>();
  s.nugget = j.at("lambda").get<double>();
  s.omega_linear = j.at("omega_r").get<double>();
  s.omega_spatial = j.at("omega_c").get<double>();
  d.log_post = j.at("log_post").get<double>();
  d.accepted = j.at("accepted").get<bool>();
  require_consistent(d.model, d.state);
  return d;
}

inline void write_chain(const Chain& chain, std::ostream& out) {
  for (const auto& d : chain.draws)
    out << draw_to_json(d).dump() << '\n';
}

inline void write_chain(const Chain& chain, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw InvalidArgument("cannot write '" + path + "'");
  write_chain(chain, out);
}

/// Reads draws back. Iteration totals are not part of the line format, so
/// `iterations` and `accepted_total` count the stored draws only.
inline Chain read_chain(std::istream& in, const std::string& source) {
  Chain chain;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r")
      continue;
    try {
      chain.draws.push_back(draw_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError(source, lineno, e.what());
    } catch (const std::logic_error& e) {
      throw ParseError(source, lineno, e.what());
    }
    chain.accepted_total += chain.draws.back().accepted;
  }
  chain.iterations = chain.draws.size();
  if (chain.empty())
    throw ParseError(source, lineno, "chain file contains no draws");
  return chain;
}

inline Chain read_chain(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw InvalidArgument("cannot open '" + path + "'");
  return read_chain(in, path);
}

// ---------------------------------------------------------------------------
// Reports and fits

inline json to_json(const InclusionReport& r, const std::vector<std::string>& names) {
  json freqs = json::array();
  std::vector<std::pair<ModelIndicator, double>> sorted(r.model_freqs.begin(), r.model_freqs.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (const auto& [m, f] : sorted) {
    json e = named_model(m, names);
    e["probability"] = f;
    freqs.push_back(std::move(e));
  }
  return {{"columns", names},
          {"n_draws", r.n_draws},
          {"linear", to_json(r.linear)},
          {"spatial", to_json(r.spatial)},
          {"model_freqs", freqs}};
}

inline json to_json(const CvReport& r, const std::vector<std::string>& names,
                    const std::vector<double>& cutoffs = {}) {
  json cands = json::array();
  for (std::size_t c = 0; c < r.candidates.size(); ++c) {
    json e = named_model(r.candidates[c], names);
    e["n_active"] = r.candidates[c].active_count();
    e["cv_rmspe"] = r.cv_rmspe[c];
    e["cv_se"] = r.cv_se[c];
    e["fold_rmspe"] = r.fold_rmspe[c];
    e["failed_folds"] = r.failed_folds[c];
    e["disqualified"] = r.disqualified[c] != 0;
    if (c < cutoffs.size())
      e["implied_cutoff"] = cutoffs[c];
    cands.push_back(std::move(e));
  }
  return {{"folds", r.folds},
          {"candidates", cands},
          {"chosen", r.chosen},
          {"chosen_one_se", r.chosen_one_se}};
}

inline json to_json(const MleFit& f, const std::vector<std::string>& names) {
  json j = named_model(f.model, names);
  j["columns"] = names;
  j["intercept"] = f.intercept;
  j["beta"] = to_json(f.beta);
  j["rho"] = to_json(f.rho);
  j["lambda"] = f.nugget;
  j["sigma2"] = f.sigma2;
  j["objective"] = f.objective;
  j["neg_log_lik"] = f.neg_log_lik;
  j["degenerate"] = f.degenerate;
  j["nugget_allowed"] = f.nugget_allowed;
  j["converged"] = f.converged;
  return j;
}

inline MleFit fit_from_json(const json& j) {
  MleFit f;
  f.model = model_from_json(j);
  f.intercept = j.at("intercept").get<double>();
  f.beta = vector_from_json(j.at("beta"));
  f.rho = vector_from_json(j.at("rho"));
  f.nugget = j.at("lambda").get<double>();
  f.sigma2 = j.at("sigma2").get<double>();
  f.objective = j.at("objective").get<double>();
  f.neg_log_lik = j.at("neg_log_lik").get<double>();
  f.degenerate = j.value("degenerate", false);
  f.nugget_allowed = j.value("nugget_allowed", true);
  f.converged = j.value("converged", true);
  if (f.beta.size() != static_cast<Eigen::Index>(f.model.size()) ||
      f.rho.size() != static_cast<Eigen::Index>(f.model.size()))
    throw InvalidArgument("fit file: coefficient vectors do not match the model size");
  return f;
}

} // namespace gpvs::io
