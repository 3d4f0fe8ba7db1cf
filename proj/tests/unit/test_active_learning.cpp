#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "../support/oracles.hpp"
#include "hhk/active_learning.hpp"
#include "hhk/errors.hpp"
#include "hhk/gp.hpp"
#include "hhk/predictive.hpp"
#include "hhk/priors.hpp"

using namespace hhk;

namespace {

PosteriorSampleSet single(const HhkParams& p) {
  PosteriorSampleSet s;
  s.draws.push_back(p);
  s.log_posterior.push_back(0.0);
  return s;
}

// Two leaves split at x0 = 0.5 with a near-sharp gate.
HhkParams split_params(double var0, double var1, double l0, double l1, double noise) {
  HhkParams p;
  p.tree = TreeStructure::symmetric(2);
  p.planes.directions = {Eigen::Vector3d(-0.5, 1.0, 0.0)};
  p.planes.relevance = {2000.0};
  p.leaf_lengthscales.resize(2, 2);
  p.leaf_lengthscales.row(0).setConstant(l0);
  p.leaf_lengthscales.row(1).setConstant(l1);
  p.leaf_variances = Eigen::Vector2d(var0, var1);
  p.noise_var = noise;
  return p;
}

std::size_t dominant_leaf(const HhkParams& p, PointView x) {
  Eigen::Index j = 0;
  leaf_weights(p.tree, p.planes, x).maxCoeff(&j);
  return static_cast<std::size_t>(j);
}

PointMatrix remove_row(const PointMatrix& m, std::size_t row) {
  PointMatrix out(m.rows() - 1, m.cols());
  for (Eigen::Index i = 0, k = 0; i < m.rows(); ++i) {
    if (static_cast<std::size_t>(i) != row) out.row(k++) = m.row(i);
  }
  return out;
}

ModelConfig quick_map(std::size_t leaves) {
  ModelConfig m;
  m.leaves = leaves;
  m.map.restarts = 2;
  m.map.max_iters = 60;
  return m;
}

Oracle small_pool(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  PointMatrix x = oracle::uniform_points(n, 2, rng);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = std::sin(6.0 * x(i, 0)) + x(i, 1);
  return Oracle::pool(std::move(x), std::move(y));
}

}  // namespace

TEST(Exp2d, FunctionValues) {
  EXPECT_EQ(exp2d_function(0.0, 0.0), 0.0);
  EXPECT_NEAR(exp2d_function(1.0, 0.0), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(exp2d_function(1.0, 0.0), 0.36788, 1e-5);
  for (double a : {0.3, 1.7, 4.2}) {
    for (double b : {-1.5, 0.0, 2.5}) EXPECT_EQ(exp2d_function(-a, b), -exp2d_function(a, b));
  }
}

TEST(Exp2d, OracleMapsUnitCubeOntoBox) {
  Oracle o = exp2d_oracle(0.0, 1);
  const std::vector<double> lo = {0.0, 0.0}, hi = {1.0, 1.0}, mid = {2.0 / 7.0, 2.0 / 7.0};
  EXPECT_NEAR(o.to_native(lo)(0), -2.0, 1e-15);
  EXPECT_NEAR(o.to_native(hi)(1), 5.0, 1e-15);
  EXPECT_NEAR(o.truth(mid), 0.0, 1e-15);
  EXPECT_EQ(o.query(mid), o.truth(mid));
  EXPECT_THROW(o.truth(std::vector<double>{1.2, 0.5}), DomainError);
}

TEST(Exp2d, NoiseIsSeededAndScaled) {
  Oracle a = exp2d_oracle(0.01, 9), b = exp2d_oracle(0.01, 9), c = exp2d_oracle(0.01, 10);
  const std::vector<double> x = {0.4, 0.3};
  std::vector<double> ya, yb, yc;
  for (int i = 0; i < 5; ++i) {
    ya.push_back(a.query(x));
    yb.push_back(b.query(x));
    yc.push_back(c.query(x));
  }
  EXPECT_EQ(ya, yb);
  EXPECT_NE(ya, yc);

  // Noise std is 1% of the function's std over the box (independent coarse grid).
  double s = 0.0, s2 = 0.0;
  const int n = 700;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double f = exp2d_function(-2.0 + 7.0 * (i + 0.5) / n, -2.0 + 7.0 * (j + 0.5) / n);
      s += f;
      s2 += f * f;
    }
  }
  const double m = s / (n * n);
  EXPECT_NEAR(a.noise_std(), 0.01 * std::sqrt(s2 / (n * n) - m * m), 1e-6);
}

TEST(Exp2d, TestSetIsNoiseless) {
  const Oracle o = exp2d_oracle(0.5, 3);
  const Dataset t = analytic_test_set(o, 50, 4);
  ASSERT_EQ(t.size(), 50u);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(t.outputs()(static_cast<Eigen::Index>(i)), o.truth(t.input(i)));
}

TEST(PoolOracle, RecordsAreTakenOnce) {
  Oracle o = small_pool(5, 1);
  const double y = o.record_output(2);
  EXPECT_EQ(o.take(2), y);
  EXPECT_EQ(o.remaining().size(), 4u);
  EXPECT_THROW(o.take(2), EmptyPool);
  EXPECT_THROW(o.take(9), EmptyPool);
}

TEST(Rmse, Examples) {
  const std::vector<double> a = {1.0, -2.0, 3.5};
  EXPECT_EQ(rmse(a, a), 0.0);
  EXPECT_NEAR(rmse(std::vector<double>{0.0, 0.0}, std::vector<double>{3.0, 4.0}), 3.5355339059327378, 1e-15);
  EXPECT_DOUBLE_EQ(rmse(std::vector<double>{1.0, 0.0, 5.0}, std::vector<double>{0.0, 2.0, 2.0}),
                   rmse(std::vector<double>{5.0, 1.0, 0.0}, std::vector<double>{2.0, 0.0, 2.0}));
  EXPECT_THROW(rmse(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}), LengthMismatch);
  EXPECT_THROW(rmse(std::vector<double>{}, std::vector<double>{}), LengthMismatch);
}

TEST(LatinHypercube, OnePointPerStratum) {
  std::mt19937_64 rng(5);
  const std::size_t n = 37;
  const PointMatrix x = latin_hypercube(n, 3, rng);
  for (Eigen::Index m = 0; m < 3; ++m) {
    std::set<long> strata;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      ASSERT_GE(x(i, m), 0.0);
      ASSERT_LT(x(i, m), 1.0);
      strata.insert(static_cast<long>(std::floor(x(i, m) * static_cast<double>(n))));
    }
    EXPECT_EQ(strata.size(), n);
  }
}

TEST(OutputScaling, PopulationStdRoundTrip) {
  const Eigen::Vector4d y(1.0, 2.0, 3.0, 6.0);
  const OutputScaling s = OutputScaling::fit(y);
  EXPECT_DOUBLE_EQ(s.mean, 3.0);
  EXPECT_NEAR(s.scale, std::sqrt(3.5), 1e-15);
  for (double v : {-4.0, 0.0, 11.5}) EXPECT_NEAR(s.inverse(s.forward(v)), v, 1e-12);
  EXPECT_EQ(OutputScaling::fit(Eigen::Vector2d(4.0, 4.0)).scale, 1.0);
}

TEST(Acquisition, FixedParamsRankingEqualsVarianceRanking) {
  std::mt19937_64 rng(11);
  const HhkParams p = sample_prior(ParameterLayout(TreeStructure::symmetric(4), 2), PriorSpec{}, rng);
  const Dataset data(oracle::uniform_points(8, 2, rng), Eigen::VectorXd::Random(8));
  PointMatrix cands = oracle::uniform_points(30, 2, rng);
  cands.row(7) = cands.row(3);
  cands.row(20) = cands.row(3);
  const auto samples = single(p);
  const MixturePredictor pred(samples, data);
  std::vector<double> acq, var;
  for (Eigen::Index i = 0; i < cands.rows(); ++i) {
    acq.push_back(acquisition(samples, data, row_view(cands, i)));
    var.push_back(pred.component(0, row_view(cands, i)).variance);
  }
  std::vector<std::size_t> by_acq(acq.size()), by_var(var.size());
  std::iota(by_acq.begin(), by_acq.end(), std::size_t{0});
  std::iota(by_var.begin(), by_var.end(), std::size_t{0});
  std::stable_sort(by_acq.begin(), by_acq.end(), [&](auto a, auto b) { return acq[a] > acq[b]; });
  std::stable_sort(by_var.begin(), by_var.end(), [&](auto a, auto b) { return var[a] > var[b]; });
  EXPECT_EQ(by_acq, by_var);
  EXPECT_EQ(acq[7], acq[3]);
  EXPECT_EQ(acq[20], acq[3]);
}

TEST(Acquisition, FarPointBeatsDuplicate) {
  HhkParams p = split_params(1.0, 1.0, 0.2, 0.2, 1e-4);
  PointMatrix x(2, 2);
  x << 0.2, 0.2, 0.3, 0.25;
  const Dataset data(x, Eigen::Vector2d(0.5, -0.1));
  const auto s = single(p);
  EXPECT_GT(acquisition(s, data, std::vector<double>{0.8, 0.9}), acquisition(s, data, std::vector<double>{0.2, 0.2}));
}

TEST(SelectQuery, IdenticalCandidatesPickFirst) {
  const auto s = single(split_params(1.0, 1.0, 0.3, 0.3, 0.01));
  const Dataset data(PointMatrix::Constant(1, 2, 0.1), Eigen::VectorXd::Constant(1, 1.0));
  PointMatrix pool = PointMatrix::Constant(6, 2, 0.7);
  std::mt19937_64 rng(0);
  const Selection sel = select_query(s, data, pool, Strategy::MaxInfoGain, rng);
  EXPECT_EQ(sel.index, 0u);
  for (Eigen::Index i = 1; i < pool.rows(); ++i) EXPECT_EQ(acquisition(s, data, row_view(pool, i)), sel.value);
}

TEST(SelectQuery, SingletonAndEmptyPool) {
  const auto s = single(split_params(1.0, 1.0, 0.3, 0.3, 0.01));
  const Dataset data(2);
  std::mt19937_64 rng(0);
  const PointMatrix one = PointMatrix::Constant(1, 2, 0.4);
  for (Strategy st : {Strategy::MaxInfoGain, Strategy::Random, Strategy::FixedParamsVariance}) {
    EXPECT_EQ(select_query(s, data, one, st, rng).index, 0u);
    EXPECT_THROW(select_query(s, data, PointMatrix(0, 2), st, rng), EmptyPool);
  }
}

TEST(SelectQuery, RandomIsSeededAndUniform) {
  const auto s = single(split_params(1.0, 1.0, 0.3, 0.3, 0.01));
  const Dataset data(2);
  std::mt19937_64 rng_pool(1);
  const PointMatrix pool = oracle::uniform_points(10, 2, rng_pool);
  std::mt19937_64 a(42), b(42);
  std::vector<std::size_t> counts(10, 0);
  for (int i = 0; i < 5000; ++i) {
    const std::size_t ia = select_query(s, data, pool, Strategy::Random, a).index;
    EXPECT_EQ(ia, select_query(s, data, pool, Strategy::Random, b).index);
    ++counts[ia];
  }
  for (std::size_t c : counts) EXPECT_NEAR(static_cast<double>(c), 500.0, 100.0);
}

// Zero-variance leaf: the greedy step never enters its region while any
// candidate with positive variance remains.
TEST(SelectQuery, ZeroVarianceRegionIsAvoided) {
  const HhkParams p = split_params(1e-12, 1.0, 0.2, 0.2, 1e-3);
  const std::size_t dead = dominant_leaf(p, std::vector<double>{0.9, 0.5});
  std::mt19937_64 rng(21);
  PointMatrix pool = oracle::uniform_points(40, 2, rng);
  std::size_t live = 0;
  for (Eigen::Index i = 0; i < pool.rows(); ++i) live += dominant_leaf(p, row_view(pool, i)) != dead;
  ASSERT_GT(live, 5u);
  Dataset data(2);
  const auto s = single(p);
  for (std::size_t step = 0; step < live; ++step) {
    for (Strategy st : {Strategy::MaxInfoGain, Strategy::FixedParamsVariance}) {
      const Selection sel = select_query(s, data, pool, st, rng);
      ASSERT_NE(dominant_leaf(p, row_view(pool, static_cast<Eigen::Index>(sel.index))), dead) << "step " << step;
    }
    const Selection sel = select_query(s, data, pool, Strategy::MaxInfoGain, rng);
    data = data.with_point(row_view(pool, static_cast<Eigen::Index>(sel.index)), 0.0);
    pool = remove_row(pool, sel.index);
  }
}

// Near-constant leaf: one observation in its region collapses the variance
// there, and the greedy step moves elsewhere.
TEST(SelectQuery, HugeLengthscaleRegionNeedsOneQuery) {
  const double noise = 0.01;
  const HhkParams p = split_params(1.0, 1.0, 1e6, 0.15, noise);
  const std::vector<double> first = {0.8, 0.5};
  const std::size_t flat = dominant_leaf(p, first);
  Dataset data(2);
  data = data.with_point(first, 0.3);
  const auto s = single(p);
  const MixturePredictor pred(s, data);
  const PointMatrix grid = [] {
    PointMatrix g(21 * 21, 2);
    for (int i = 0; i < 21; ++i) {
      for (int j = 0; j < 21; ++j) g.row(i * 21 + j) << i / 20.0, j / 20.0;
    }
    return g;
  }();
  double max_flat = 0.0, min_other = 1e300;
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    const PointView x = row_view(grid, i);
    if (std::abs(x[0] - 0.5) < 0.02) continue;  // gate transition band
    const double v = pred.component(0, x).variance;
    if (dominant_leaf(p, x) == flat) max_flat = std::max(max_flat, v);
    else min_other = std::min(min_other, v);
  }
  EXPECT_LT(max_flat, 1.01 * noise);
  EXPECT_GT(min_other, max_flat);

  std::mt19937_64 rng(22);
  PointMatrix pool = oracle::uniform_points(60, 2, rng);
  for (int step = 0; step < 8; ++step) {
    const Selection sel = select_query(s, data, pool, Strategy::MaxInfoGain, rng);
    EXPECT_NE(dominant_leaf(p, row_view(pool, static_cast<Eigen::Index>(sel.index))), flat) << "step " << step;
    data = data.with_point(row_view(pool, static_cast<Eigen::Index>(sel.index)), 0.0);
    pool = remove_row(pool, sel.index);
  }
}

TEST(PredictMeans, ReportsRawUnits) {
  // Noiseless pool with raw outputs far from standard scale.
  std::mt19937_64 rng(31);
  const PointMatrix x = oracle::uniform_points(12, 2, rng);
  Eigen::VectorXd y(12);
  for (Eigen::Index i = 0; i < 12; ++i) y(i) = 500.0 + 80.0 * std::sin(3.0 * x(i, 0)) * x(i, 1);
  const Dataset raw(x, y);
  const OutputScaling sc = OutputScaling::fit(y);
  const Dataset z = raw.with_outputs(((y.array() - sc.mean) / sc.scale).matrix());
  HhkParams p = split_params(1.0, 1.0, 0.5, 0.5, 1e-8);
  const Eigen::VectorXd pred = predict_means(single(p), z, sc, x);
  for (Eigen::Index i = 0; i < 12; ++i) EXPECT_NEAR(pred(i), y(i), 1e-3);
}

TEST(ActiveLearning, ZeroIterationsKeepsInitialRmseOnly) {
  Oracle o = exp2d_oracle(0.01, 1);
  const Dataset test = analytic_test_set(o, 100, 2);
  ALConfig cfg;
  cfg.iterations = 0;
  cfg.inference = InferenceKind::Map;
  cfg.rng_seed = 3;
  const ALState st = run_active_learning(o, cfg, quick_map(2), test);
  EXPECT_TRUE(st.history.empty());
  EXPECT_EQ(st.dataset.size(), 5u);
  EXPECT_TRUE(std::isfinite(st.initial_rmse));
  EXPECT_GT(st.initial_rmse, 0.0);
}

TEST(ActiveLearning, SeededRunsAreIdentical) {
  for (Strategy strategy : {Strategy::Random, Strategy::MaxInfoGain}) {
    ALConfig cfg;
    cfg.iterations = 3;
    cfg.candidates_per_step = 32;
    cfg.strategy = strategy;
    cfg.inference = InferenceKind::Map;
    cfg.rng_seed = 17;
    Oracle o1 = exp2d_oracle(0.01, 5), o2 = exp2d_oracle(0.01, 5);
    const Dataset test = analytic_test_set(o1, 50, 6);
    const ALState a = run_active_learning(o1, cfg, quick_map(2), test);
    const ALState b = run_active_learning(o2, cfg, quick_map(2), test);
    ASSERT_EQ(a.history.size(), 3u);
    ASSERT_EQ(b.history.size(), 3u);
    EXPECT_EQ(a.dataset.size(), 5u + 3u);
    for (std::size_t t = 0; t < 3; ++t) {
      EXPECT_EQ(a.history[t].iteration, t + 1);
      EXPECT_EQ(a.history[t].x, b.history[t].x);
      EXPECT_EQ(a.history[t].y, b.history[t].y);
      EXPECT_EQ(a.history[t].rmse, b.history[t].rmse);
    }
    EXPECT_EQ(a.initial_rmse, b.initial_rmse);
  }
}

TEST(ActiveLearning, PoolRecordsAreNeverRequeried) {
  Oracle o = small_pool(40, 8);
  const Oracle copy = small_pool(40, 8);
  std::mt19937_64 rng(9);
  const Dataset test(oracle::uniform_points(20, 2, rng), Eigen::VectorXd::Zero(20));
  ALConfig cfg;
  cfg.iterations = 6;
  cfg.candidates_per_step = 10;
  cfg.inference = InferenceKind::Map;
  cfg.rng_seed = 4;
  const ALState st = run_active_learning(o, cfg, quick_map(2), test);
  ASSERT_EQ(st.history.size(), 6u);
  std::set<std::size_t> seen;
  for (const auto& r : st.history) {
    ASSERT_TRUE(r.pool_record.has_value());
    EXPECT_TRUE(seen.insert(*r.pool_record).second);
    const PointView in = copy.record_input(*r.pool_record);
    EXPECT_EQ(r.x(0), in[0]);
    EXPECT_EQ(r.x(1), in[1]);
    EXPECT_EQ(r.y, copy.record_output(*r.pool_record));
  }
  EXPECT_EQ(o.remaining().size(), 40u - 5u - 6u);
  for (std::size_t rec : seen) EXPECT_EQ(std::count(o.remaining().begin(), o.remaining().end(), rec), 0);
}

TEST(ActiveLearning, PoolTooSmall) {
  Oracle o = small_pool(6, 1);
  std::mt19937_64 rng(2);
  const Dataset test(oracle::uniform_points(5, 2, rng), Eigen::VectorXd::Zero(5));
  ALConfig cfg;
  cfg.iterations = 3;
  cfg.inference = InferenceKind::Map;
  EXPECT_THROW(run_active_learning(o, cfg, quick_map(1), test), EmptyPool);
}

TEST(ALConfig, Validation) {
  ALConfig cfg;
  cfg.candidates_per_step = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_EQ(parse_strategy("fixed-params-variance"), Strategy::FixedParamsVariance);
  EXPECT_EQ(to_string(parse_strategy("max-info-gain")), "max-info-gain");
  EXPECT_EQ(parse_inference("map"), InferenceKind::Map);
  EXPECT_THROW(parse_strategy("greedy"), ConfigError);
  EXPECT_THROW(parse_inference("vi"), ConfigError);
}
