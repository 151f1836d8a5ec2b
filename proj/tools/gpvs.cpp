// Command-line front end. Every subcommand writes its results as files into
// --output-dir; errors go to stderr as a JSON record.

#include "gpvs/cli.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>

namespace {

using namespace gpvs;
using gpvs::cli::Context;

int report(const std::exception& e, const cli::fs::path& out_dir) {
  const auto rec = cli::error_record(e);
  std::cerr << rec.dump() << '\n';
  std::error_code ec;
  if (cli::fs::is_directory(out_dir, ec)) {
    std::ofstream f(out_dir / "error.json", std::ios::binary);
    if (f)
      f << rec.dump(2) << '\n';
  }
  return cli::exit_code_for(e);
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian variable selection for Gaussian-process regression"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--seed", seed, "Overrides the sampler and simulation seeds");
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--output-dir", out_dir, "Directory for all outputs");

  std::function<void(const Context&)> action;
  std::string command;
  auto sub = [&](const char* name, const char* help) {
    auto* s = app.add_subcommand(name, help);
    s->callback([&command, name] { command = name; });
    return s;
  };

  sub("simulate", "Write the synthetic training and validation designs");

  cli::SampleOptions sample_opt;
  sub("sample", "Run the sampler and write chain.jsonl")
      ->add_option("--data", sample_opt.data, "Training CSV");

  cli::InclusionOptions inc_opt;
  auto* inc = sub("inclusion", "Inclusion probabilities from a chain");
  inc->add_option("--chain", inc_opt.chain, "Chain file")->required();
  inc->add_option("--data", inc_opt.data, "Training CSV (for covariate names)");

  cli::SelectOptions sel_opt;
  auto* sel = sub("select", "Candidate ladder and cross-validation");
  sel->add_option("--chain", sel_opt.chain, "Chain file")->required();
  sel->add_option("--data", sel_opt.data, "Training CSV");

  cli::FitCommandOptions fit_opt;
  bool no_nugget = false;
  auto* fit = sub("fit", "Maximum-likelihood kriging fit of one model");
  fit->add_option("--data", fit_opt.data, "Training CSV");
  fit->add_option("--model", fit_opt.model, "ok, uk, none, or L:...|S:...");
  fit->add_flag("--no-nugget", no_nugget, "Fix the nugget at zero");

  cli::PredictOptions pred_opt;
  double denoise = -1.0;
  auto* pred = sub("predict", "Predict at new sites");
  pred->add_option("--mode", pred_opt.mode, "mle or average")->check(CLI::IsMember({"mle", "average"}));
  pred->add_option("--data", pred_opt.data, "Training CSV");
  pred->add_option("--sites", pred_opt.sites, "CSV of new sites (raw scale)");
  pred->add_option("--fit", pred_opt.fit, "fit.json (mode mle)");
  pred->add_option("--chain", pred_opt.chain, "Chain file (mode average)");
  pred->add_option("--denoise-threshold", denoise, "Drop models rarer than this");

  cli::BenchmarkOptions bench_opt;
  auto* bench = sub("benchmark", "Compare OK, UK, averaging, posterior inclusion and MAP");
  bench->add_option("--data", bench_opt.data, "Training CSV; omit for the synthetic study");
  bench->add_option("--validation", bench_opt.validation, "Hold-out CSV");
  bench->add_option("--train-fraction", bench_opt.train_fraction,
                    "Training share when no hold-out file is given");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << nlohmann::json{{"error", {{"type", "usage"}, {"message", e.what()}, {"exit_code", 1}}}}.dump()
              << '\n';
    return 1;
  }
  if (denoise >= 0.0)
    pred_opt.denoise_threshold = denoise;
  fit_opt.nugget = !no_nugget;

  Context ctx;
  ctx.out_dir = out_dir;
  ctx.threads = threads;
  try {
    if (!config_path.empty())
      ctx.cfg = load_config(config_path);
    if (seed) {
      ctx.cfg.sampler.seed = *seed;
      ctx.cfg.simulate.seed = *seed;
    }
    ctx.cfg.validate();
    cli::prepare_output(ctx.out_dir);
    cli::OutputLock lock(ctx.out_dir);
    if (command == "simulate")
      cli::cmd_simulate(ctx);
    else if (command == "sample")
      cli::cmd_sample(ctx, sample_opt);
    else if (command == "inclusion")
      cli::cmd_inclusion(ctx, inc_opt);
    else if (command == "select")
      cli::cmd_select(ctx, sel_opt);
    else if (command == "fit")
      cli::cmd_fit(ctx, fit_opt);
    else if (command == "predict")
      cli::cmd_predict(ctx, pred_opt);
    else if (command == "benchmark")
      cli::cmd_benchmark(ctx, bench_opt);
    cli::write_run_meta(ctx, command);
  } catch (const std::exception& e) {
    return report(e, ctx.out_dir);
  }
  return 0;
}
