#include "gpvs/predict.hpp"

#include "support/gen.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace gpvs;

namespace {

ParameterState state_for(const ModelIndicator& m, gen::Rng& rng, double nugget) {
  auto s = gen::state(rng, m);
  s.nugget = nugget;
  return s;
}

Draw make_draw(const ModelIndicator& m, const ParameterState& s) { return Draw{0, m, s, 0.0, true}; }

} // namespace

TEST(ConditionalMean, EmptyRequest) {
  gen::Rng rng(1);
  const Dataset d = gen::dataset(rng, 5, 2);
  const auto s = gen::state(rng, ModelIndicator::full(2));
  EXPECT_EQ(conditional_mean(d, s, PredictionRequest{Eigen::MatrixXd(0, 2)}).size(), 0);
}

TEST(ConditionalMean, InterpolatesWithoutNugget) {
  gen::Rng rng(2);
  const Dataset d = gen::dataset(rng, 12, 3);
  const auto m = ModelIndicator::full(3);
  const auto s = state_for(m, rng, 0.0);
  EXPECT_LT((conditional_mean(d, s, PredictionRequest{d.x}) - d.y).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(ConditionalMean, ZeroResidualGivesTrend) {
  gen::Rng rng(3);
  const auto m = ModelIndicator::full(2);
  auto s = state_for(m, rng, 0.3);
  const Eigen::MatrixXd x = gen::unit_matrix(rng, 10, 2);
  const Eigen::VectorXd y = (x * s.beta).array() + s.intercept;
  const Dataset d = make_dataset(x, y);
  const Eigen::MatrixXd sites = gen::unit_matrix(rng, 4, 2);
  const Eigen::VectorXd expect = (sites * s.beta).array() + s.intercept;
  EXPECT_LT((conditional_mean(d, s, PredictionRequest{sites}) - expect).norm(), 1e-10);
}

TEST(ConditionalMean, MatchesDenseFormula) {
  gen::Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    const Dataset d = gen::dataset(rng, 10, 3);
    const auto m = gen::model(rng, 3);
    const auto s = gen::state(rng, m);
    const Eigen::MatrixXd sites = gen::unit_matrix(rng, 5, 3);
    Eigen::MatrixXd k = oracle::corr(d.x, d.x, s.rho);
    k.diagonal().array() += s.nugget;
    const Eigen::VectorXd resid = d.y - (d.x * s.beta).array().matrix() - Eigen::VectorXd::Constant(10, s.intercept);
    const Eigen::VectorXd expect =
        ((sites * s.beta).array() + s.intercept).matrix() + oracle::corr(sites, d.x, s.rho) * k.inverse() * resid;
    EXPECT_LT((conditional_mean(d, s, PredictionRequest{sites}) - expect).norm(), 1e-8);
  }
}

TEST(ConditionalMean, WrongWidthRejected) {
  gen::Rng rng(5);
  const Dataset d = gen::dataset(rng, 5, 2);
  const auto s = gen::state(rng, ModelIndicator::full(2));
  EXPECT_THROW(conditional_mean(d, s, PredictionRequest{Eigen::MatrixXd::Zero(2, 3)}), InvalidArgument);
}

TEST(ModelAverage, SingleDrawEqualsConditionalMean) {
  gen::Rng rng(6);
  const Dataset d = gen::dataset(rng, 8, 2);
  const auto m = ModelIndicator::full(2);
  const auto s = gen::state(rng, m);
  const PredictionRequest req{gen::unit_matrix(rng, 3, 2)};
  Chain c;
  c.draws.push_back(make_draw(m, s));
  const auto avg = model_average(c, d, req);
  EXPECT_EQ(avg.ensemble_size, 1u);
  EXPECT_LT((avg.mean - conditional_mean(d, s, req)).norm(), 1e-14);
}

TEST(ModelAverage, RepeatedDrawIsIdempotent) {
  gen::Rng rng(7);
  const Dataset d = gen::dataset(rng, 8, 2);
  const auto m = ModelIndicator::full(2);
  const auto s = gen::state(rng, m);
  const PredictionRequest req{gen::unit_matrix(rng, 3, 2)};
  Chain c;
  for (int i = 0; i < 100; ++i)
    c.draws.push_back(make_draw(m, s));
  EXPECT_LT((model_average(c, d, req).mean - conditional_mean(d, s, req)).norm(), 1e-12);
}

TEST(ModelAverage, ThreeDistinctDrawsBruteForce) {
  gen::Rng rng(8);
  const Dataset d = gen::dataset(rng, 9, 3);
  const PredictionRequest req{gen::unit_matrix(rng, 4, 3)};
  Chain c;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(4);
  for (int i = 0; i < 3; ++i) {
    const auto m = gen::model(rng, 3);
    const auto s = gen::state(rng, m);
    c.draws.push_back(make_draw(m, s));
    sum += conditional_mean(d, s, req);
  }
  EXPECT_LT((model_average(c, d, req).mean - sum / 3.0).norm(), 1e-12);
}

TEST(ModelAverage, DenoisingDropsRareModels) {
  gen::Rng rng(9);
  const Dataset d = gen::dataset(rng, 8, 2);
  const PredictionRequest req{gen::unit_matrix(rng, 2, 2)};
  const auto common = ModelIndicator::full(2);
  const auto rare = ModelIndicator::ordinary_kriging(2);
  const auto sc = gen::state(rng, common), sr = gen::state(rng, rare);
  Chain c;
  for (int i = 0; i < 9; ++i)
    c.draws.push_back(make_draw(common, sc));
  c.draws.push_back(make_draw(rare, sr));
  const auto kept = model_average(c, d, req, 0.2);
  EXPECT_EQ(kept.ensemble_size, 9u);
  EXPECT_LT((kept.mean - conditional_mean(d, sc, req)).norm(), 1e-12);
  EXPECT_EQ(model_average(c, d, req, 0.0).ensemble_size, 10u);
  EXPECT_THROW(model_average(c, d, req, 0.95), EmptyEnsemble);
  EXPECT_THROW(model_average(c, d, req, 1.0), InvalidArgument);
}

TEST(ModelAverage, EmptyChain) {
  gen::Rng rng(10);
  const Dataset d = gen::dataset(rng, 4, 1);
  EXPECT_THROW(model_average(Chain{}, d, PredictionRequest{Eigen::MatrixXd::Zero(1, 1)}), EmptyEnsemble);
}

TEST(StreamingAverager, ReusesPredictionForRepeatedState) {
  gen::Rng rng(11);
  const Dataset d = gen::dataset(rng, 8, 2);
  const auto m = ModelIndicator::full(2);
  const auto a = gen::state(rng, m), b = gen::state(rng, m);
  StreamingAverager st(d, PredictionRequest{gen::unit_matrix(rng, 3, 2)});
  for (const auto* s : {&a, &a, &a, &b, &b, &a})
    st(make_draw(m, *s));
  EXPECT_EQ(st.evaluations(), 3u);
  EXPECT_EQ(st.averager().total(), 6u);
}

TEST(StreamingAverager, MatchesBatchAverageOnChain) {
  gen::Rng rng(12);
  const Dataset d = gen::dataset(rng, 10, 2);
  SamplerConfig cfg;
  cfg.n_iter = 400;
  cfg.burn_in = 100;
  const PredictionRequest req{gen::unit_matrix(rng, 5, 2)};
  StreamingAverager st(d, req);
  const Chain c = run_chain(d, PriorConfig{}, cfg, GaussianLikelihood{}, st);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(5);
  for (const auto& dr : c.draws)
    sum += conditional_mean(d, dr.state, req);
  EXPECT_LT((st.averager().result().mean - sum / static_cast<double>(c.size())).norm(), 1e-9);
  EXPECT_LT(st.evaluations(), c.size());
}

// ---------------------------------------------------------------------------

TEST(ProfileGls, MatchesDenseOracle) {
  gen::Rng rng(13);
  for (int t = 0; t < 30; ++t) {
    const Dataset d = gen::dataset(rng, gen::integer(rng, 6, 20), 3);
    const auto m = gen::model(rng, 3);
    Eigen::Vector3d rho;
    for (int j = 0; j < 3; ++j)
      rho(j) = m.spatial[j] ? gen::uniform(rng, 0.05, 0.95) : 1.0;
    const double nugget = std::exp(gen::uniform(rng, -6.0, 1.0));
    const auto g = profile_gls(d, m, rho, nugget);
    const auto ref = oracle::gls(trend_basis(d.x, m), d.y, oracle::corr(d.x, d.x, rho), nugget);
    EXPECT_LT((g.coef - ref.coef).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_NEAR(g.sigma2, ref.sigma2, 1e-8 * std::max(1.0, ref.sigma2));
  }
}

TEST(FitMle, ZeroResidualIsDegenerate) {
  gen::Rng rng(14);
  const Eigen::MatrixXd x = gen::unit_matrix(rng, 8, 2);
  const Eigen::VectorXd y = 1.0 + 2.0 * x.col(0).array() - x.col(1).array();
  const Dataset d = make_dataset(x, y);
  const MleFit f = fit_mle(d, ModelIndicator({1, 1}, {0, 0}), false);
  EXPECT_TRUE(f.degenerate);
  EXPECT_EQ(f.sigma2, FitOptions{}.sigma2_floor);
  EXPECT_NEAR(f.beta(0), 2.0, 1e-10);
}

TEST(FitMle, RespectsModelIndicators) {
  gen::Rng rng(15);
  const Dataset d = gen::dataset(rng, 15, 3);
  const ModelIndicator m({1, 0, 0}, {0, 1, 0});
  const MleFit f = fit_mle(d, m, true);
  EXPECT_EQ(f.beta(1), 0.0);
  EXPECT_EQ(f.beta(2), 0.0);
  EXPECT_EQ(f.rho(0), 1.0);
  EXPECT_EQ(f.rho(2), 1.0);
  EXPECT_GT(f.rho(1), 0.0);
  EXPECT_LT(f.rho(1), 1.0);
  EXPECT_GE(f.nugget, std::exp(-12.0) * (1 - 1e-12));
  EXPECT_LE(f.nugget, std::exp(3.0) * (1 + 1e-12));
}

TEST(FitMle, BeatsRandomFeasiblePoints) {
  gen::Rng rng(16);
  const Dataset d = gen::dataset(rng, 14, 2);
  const auto m = ModelIndicator::full(2);
  const MleFit f = fit_mle(d, m, true);
  for (int t = 0; t < 1000; ++t) {
    const Eigen::Vector2d rho(gen::uniform(rng, 1e-6, 1 - 1e-6), gen::uniform(rng, 1e-6, 1 - 1e-6));
    const double nugget = std::exp(gen::uniform(rng, -12.0, 3.0));
    EXPECT_LE(f.objective, profile_gls(d, m, rho, nugget).objective + 1e-8);
  }
}

TEST(FitMle, ObjectiveAgreesWithDenseProfile) {
  gen::Rng rng(17);
  const Dataset d = gen::dataset(rng, 12, 2);
  const auto m = ModelIndicator::universal_kriging(2);
  const MleFit f = fit_mle(d, m, true);
  EXPECT_NEAR(f.objective,
              oracle::profile_objective(trend_basis(d.x, m), d.y, oracle::corr(d.x, d.x, f.rho), f.nugget),
              1e-8 * std::abs(f.objective) + 1e-8);
}

TEST(FitMle, DeterministicAcrossThreadCounts) {
  gen::Rng rng(18);
  const Dataset d = gen::dataset(rng, 12, 2);
  FitOptions one, many;
  many.threads = 3;
  const MleFit a = fit_mle(d, ModelIndicator::full(2), true, one);
  const MleFit b = fit_mle(d, ModelIndicator::full(2), true, many);
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_EQ(a.rho, b.rho);
}

TEST(FitMle, NuggetFreeStaysWellConditioned) {
  gen::Rng rng(31);
  for (int t = 0; t < 15; ++t) {
    const auto p = gen::integer(rng, 1, 4);
    const Dataset d = gen::dataset(rng, gen::integer(rng, 4, 12), p);
    auto m = gen::model(rng, static_cast<std::size_t>(p));
    m.spatial[0] = 1;
    FitOptions opt;
    MleFit f;
    try {
      f = fit_mle(d, m, false, opt);
    } catch (const OptimizationFailure&) {
      continue;
    }
    const Eigen::MatrixXd r = oracle::corr(d.x, d.x, f.rho);
    EXPECT_LE(oracle::condition_number(r), opt.max_condition) << t;
  }
}

TEST(FitMle, NuggetFreeFailsWhenNoStableCorrelationExists) {
  // 40 points on a short segment: even the roughest allowed rho leaves R
  // numerically singular, so only a nugget could rescue the fit
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(40, 0.0, 0.05);
  const Eigen::VectorXd y = x.array().sin();
  const Dataset d = make_dataset(x, y);
  EXPECT_THROW(fit_mle(d, ModelIndicator::ordinary_kriging(1), false), OptimizationFailure);
  EXPECT_NO_THROW(fit_mle(d, ModelIndicator::ordinary_kriging(1), true));
}

TEST(FitMle, DimensionMismatch) {
  gen::Rng rng(19);
  const Dataset d = gen::dataset(rng, 6, 2);
  EXPECT_THROW(fit_mle(d, ModelIndicator::full(3), true), InvalidArgument);
}

TEST(PredictMle, InterpolatesWithoutNugget) {
  gen::Rng rng(20);
  const Dataset d = gen::dataset(rng, 10, 2);
  const MleFit f = fit_mle(d, ModelIndicator::ordinary_kriging(2), false);
  EXPECT_EQ(f.nugget, 0.0);
  EXPECT_LT((predict_mle(f, d, PredictionRequest{d.x}) - d.y).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(PredictMle, NoSpatialPartIsLeastSquares) {
  gen::Rng rng(21);
  const Dataset d = gen::dataset(rng, 12, 3);
  const ModelIndicator m({1, 0, 1}, {0, 0, 0});
  const Eigen::MatrixXd f = trend_basis(d.x, m);
  const Eigen::VectorXd ols = (f.transpose() * f).inverse() * f.transpose() * d.y;
  const Eigen::MatrixXd sites = gen::unit_matrix(rng, 5, 3);
  const Eigen::VectorXd expect = trend_basis(sites, m) * ols;
  for (bool nugget : {false, true}) {
    const MleFit fit = fit_mle(d, m, nugget);
    EXPECT_LT((predict_mle(fit, d, PredictionRequest{sites}) - expect).norm(), 1e-8) << nugget;
  }
}

TEST(PredictMle, OrdinaryAndUniversalDiffer) {
  gen::Rng rng(22);
  const Dataset d = gen::dataset(rng, 12, 2);
  const PredictionRequest req{gen::unit_matrix(rng, 4, 2)};
  const auto ok = predict_mle(fit_mle(d, ModelIndicator::ordinary_kriging(2), true), d, req);
  const auto uk = predict_mle(fit_mle(d, ModelIndicator::universal_kriging(2), true), d, req);
  EXPECT_TRUE(ok.allFinite());
  EXPECT_TRUE(uk.allFinite());
  EXPECT_GT((ok - uk).norm(), 1e-10);
}

TEST(PredictMle, InactiveCovariateValuesIrrelevant) {
  gen::Rng rng(23);
  Dataset d = gen::dataset(rng, 10, 3);
  const ModelIndicator m({1, 0, 0}, {1, 1, 0});
  const MleFit f = fit_mle(d, m, true);
  Eigen::MatrixXd sites = gen::unit_matrix(rng, 4, 3);
  const auto before = predict_mle(f, d, PredictionRequest{sites});
  d.x.col(2) = gen::unit_matrix(rng, 10, 1);
  sites.col(2) = gen::unit_matrix(rng, 4, 1);
  EXPECT_LT((predict_mle(f, d, PredictionRequest{sites}) - before).norm(), 1e-12);
}
