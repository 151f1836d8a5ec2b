#include "gpvs/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

using namespace gpvs;
namespace fs = std::filesystem;

namespace {

/// Fresh scratch directory per test.
fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gpvs_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t line_count(const fs::path& p) {
  const std::string s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

cli::Context small_context(const fs::path& out) {
  cli::Context ctx;
  ctx.out_dir = out;
  ctx.cfg.sampler.n_iter = 1500;
  ctx.cfg.sampler.burn_in = 500;
  ctx.cfg.simulate.n_train = 14;
  ctx.cfg.simulate.n_validation = 10;
  ctx.cfg.simulate.lhd_restarts = 2;
  ctx.cfg.select.v_folds = 3;
  return ctx;
}

int run(const std::string& args, const fs::path& err = {}) {
  std::string cmd = std::string(GPVS_EXE) + " " + args + " > /dev/null";
  cmd += err.empty() ? " 2> /dev/null" : " 2> " + err.string();
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

} // namespace

TEST(ParseModel, Forms) {
  EXPECT_EQ(cli::parse_model("ok", 3), ModelIndicator::ordinary_kriging(3));
  EXPECT_EQ(cli::parse_model("uk", 3), ModelIndicator::full(3));
  EXPECT_EQ(cli::parse_model("L:100|S:011", 3), ModelIndicator({1, 0, 0}, {0, 1, 1}));
  EXPECT_THROW(cli::parse_model("L:10|S:011", 3), InvalidArgument);
  EXPECT_THROW(cli::parse_model("L:102|S:011", 3), InvalidArgument);
  EXPECT_THROW(cli::parse_model("garbage", 3), InvalidArgument);
}

TEST(ExitCodes, ByErrorKind) {
  EXPECT_EQ(cli::exit_code_for(InvalidArgument("x")), 1);
  EXPECT_EQ(cli::exit_code_for(ParseError("f", 2, "x")), 1);
  EXPECT_EQ(cli::exit_code_for(EmptyEnsemble("x")), 1);
  EXPECT_EQ(cli::exit_code_for(NumericalSingularity("x", {})), 2);
  EXPECT_EQ(cli::exit_code_for(OptimizationFailure("x", {})), 2);
  const auto rec = cli::error_record(ParseError("data.csv", 4, "bad"));
  EXPECT_EQ(rec["error"]["type"], "parse_error");
  EXPECT_EQ(rec["error"]["line"], 4);
}

TEST(Commands, SimulateWritesDesignSizes) {
  cli::Context ctx;
  ctx.out_dir = scratch("simulate");
  ctx.cfg.simulate.lhd_restarts = 2;
  cli::cmd_simulate(ctx);
  EXPECT_EQ(line_count(ctx.out_dir / "train.csv"), 36u);
  EXPECT_EQ(line_count(ctx.out_dir / "validation.csv"), 101u);
  EXPECT_EQ(slurp(ctx.out_dir / "train.csv").substr(0, 15), "x1,x2,x3,x4,x5,");
}

TEST(Commands, SamplePredictAndSelectPipeline) {
  const fs::path out = scratch("pipeline");
  auto ctx = small_context(out);
  cli::cmd_simulate(ctx);
  ctx.cfg.data.train = (out / "train.csv").string();
  const Chain chain = cli::cmd_sample(ctx, {});
  EXPECT_EQ(chain.size(), 1000u);
  EXPECT_EQ(line_count(out / "chain.jsonl"), 1000u);

  const auto inc = cli::cmd_inclusion(ctx, {(out / "chain.jsonl").string(), ""});
  EXPECT_EQ(line_count(out / "inclusion.csv"), 11u);
  EXPECT_EQ(inc.n_draws, 1000u);

  const auto cv = cli::cmd_select(ctx, {(out / "chain.jsonl").string(), ""});
  EXPECT_LE(cv.candidates.size(), 10u);
  EXPECT_EQ(line_count(out / "cv_curve.csv"), cv.candidates.size() + 1);

  cli::PredictOptions po;
  po.mode = "average";
  po.chain = (out / "chain.jsonl").string();
  po.sites = (out / "validation.csv").string();
  const auto pred = cli::cmd_predict(ctx, po);
  EXPECT_EQ(pred.size(), 10);
  EXPECT_TRUE(pred.allFinite());
  EXPECT_EQ(slurp(out / "predictions.csv").substr(0, 31), "index,prediction,ensemble_size\n");
}

TEST(Commands, MlePredictionInterpolatesTrainingSites) {
  const fs::path out = scratch("interp");
  auto ctx = small_context(out);
  cli::cmd_simulate(ctx);
  ctx.cfg.data.train = (out / "train.csv").string();
  cli::FitCommandOptions fo;
  fo.model = "L:00010|S:11100";
  fo.nugget = false;
  const MleFit fit = cli::cmd_fit(ctx, fo);
  EXPECT_EQ(fit.nugget, 0.0);
  cli::PredictOptions po;
  po.fit = (out / "fit.json").string();
  po.sites = ctx.cfg.data.train;
  const auto pred = cli::cmd_predict(ctx, po);
  const Dataset d = ingest(ctx.cfg.data.train, "y", true);
  EXPECT_LT((pred - d.y).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Commands, OutOfRangeSitesWarn) {
  const fs::path out = scratch("extrap");
  auto ctx = small_context(out);
  {
    std::ofstream f(out / "train.csv");
    f << "a,y\n0,1\n1,2\n2,0\n3,1\n";
    std::ofstream s(out / "sites.csv");
    s << "a\n5\n";
  }
  ctx.cfg.data.train = (out / "train.csv").string();
  cli::cmd_fit(ctx, {"", "ok", true});
  std::vector<std::string> warnings;
  ScopedWarningSink sink([&](std::string_view m) { warnings.emplace_back(m); });
  cli::PredictOptions po;
  po.fit = (out / "fit.json").string();
  po.sites = (out / "sites.csv").string();
  cli::cmd_predict(ctx, po);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("outside the training range"), std::string::npos);
}

TEST(Commands, BenchmarkHasFiveRows) {
  const fs::path out = scratch("bench");
  auto ctx = small_context(out);
  const auto res = cli::cmd_benchmark(ctx, {});
  ASSERT_EQ(res.rows.size(), 5u);
  for (const auto& r : res.rows)
    EXPECT_TRUE(std::isfinite(r.rmspe)) << r.method;
  EXPECT_EQ(line_count(out / "benchmark.csv"), 6u);
  EXPECT_EQ(res.rows[0].method, "OK");
  EXPECT_EQ(res.rows[0].model, ModelIndicator::ordinary_kriging(5));
  EXPECT_EQ(res.rows[1].model, ModelIndicator::universal_kriging(5));
}

TEST(Commands, BenchmarkOnIngestedSplit) {
  const fs::path out = scratch("bench_split");
  auto ctx = small_context(out);
  cli::cmd_simulate(ctx);
  cli::BenchmarkOptions bo;
  bo.data = (out / "validation.csv").string();
  bo.train_fraction = 0.6;
  const auto res = cli::cmd_benchmark(ctx, bo);
  EXPECT_EQ(res.rows.size(), 5u);
}

TEST(Commands, LockBlocksConcurrentRun) {
  const fs::path out = scratch("lock");
  cli::OutputLock first(out);
  EXPECT_THROW(cli::OutputLock second(out), InvalidArgument);
}

TEST(Executable, SimulateSucceedsAndWritesMeta) {
  const fs::path out = scratch("exe_sim");
  EXPECT_EQ(run("--output-dir " + out.string() + " simulate"), 0);
  EXPECT_TRUE(fs::exists(out / "train.csv"));
  EXPECT_TRUE(fs::exists(out / "run_meta.json"));
  EXPECT_FALSE(fs::exists(out / ".gpvs.lock"));
}

TEST(Executable, ValidationErrorsExitOne) {
  const fs::path out = scratch("exe_err");
  {
    std::ofstream f(out / "bad.json");
    f << R"({"sampler": {"n_itr": 3}})";
  }
  const fs::path err = out / "stderr.txt";
  EXPECT_EQ(run("--config " + (out / "bad.json").string() + " --output-dir " + out.string() + " simulate", err), 1);
  const auto rec = nlohmann::json::parse(slurp(err));
  EXPECT_EQ(rec["error"]["exit_code"], 1);
  EXPECT_TRUE(fs::exists(out / "error.json"));

  EXPECT_EQ(run("--output-dir " + out.string() + " fit --data " + (out / "missing.csv").string()), 1);
  EXPECT_EQ(run("--output-dir " + out.string() + " nonsense"), 1);
}

TEST(Executable, LockedDirectoryExitsOne) {
  const fs::path out = scratch("exe_lock");
  cli::OutputLock held(out);
  EXPECT_EQ(run("--output-dir " + out.string() + " simulate"), 1);
}

TEST(Executable, SeedChangesOutputs) {
  const fs::path a = scratch("exe_seed_a"), b = scratch("exe_seed_b"), c = scratch("exe_seed_c");
  ASSERT_EQ(run("--seed 5 --output-dir " + a.string() + " simulate"), 0);
  ASSERT_EQ(run("--seed 5 --output-dir " + b.string() + " simulate"), 0);
  ASSERT_EQ(run("--seed 6 --output-dir " + c.string() + " simulate"), 0);
  EXPECT_EQ(slurp(a / "train.csv"), slurp(b / "train.csv"));
  EXPECT_NE(slurp(a / "train.csv"), slurp(c / "train.csv"));
}
