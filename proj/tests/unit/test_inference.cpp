#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "../support/oracles.hpp"
#include "hhk/errors.hpp"
#include "hhk/inference.hpp"

using namespace hhk;

namespace {

LogDensityFn gaussian_target(const Eigen::MatrixXd& cov) {
  const Eigen::MatrixXd prec = cov.inverse();
  return [prec](const Eigen::VectorXd& x) {
    return LogDensityValue{-0.5 * x.dot(prec * x), -(prec * x)};
  };
}

Dataset toy_data(std::size_t n, std::uint64_t seed, double noise_sd = 0.0) {
  std::mt19937_64 rng(seed);
  PointMatrix x = oracle::uniform_points(n, 2, rng);
  std::normal_distribution<double> eps(0.0, noise_sd > 0.0 ? noise_sd : 1.0);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < y.size(); ++i)
    y(i) = std::sin(5.0 * x(i, 0)) + 0.5 * x(i, 1) + (noise_sd > 0.0 ? noise_sd * eps(rng) : 0.0);
  y = (y.array() - y.mean()).matrix();
  return Dataset(x, y / std::sqrt(y.squaredNorm() / static_cast<double>(n)));
}

}  // namespace

TEST(DualAveraging, UpdateDirections) {
  DualAveraging up(0.1), down(0.1), at(0.1);
  double prev_up = up.update(1.0), prev_down = down.update(0.0);
  for (int t = 0; t < 50; ++t) {
    const double u = up.update(1.0), d = down.update(0.0);
    EXPECT_GT(u, prev_up);
    EXPECT_LT(d, prev_down);
    prev_up = u;
    prev_down = d;
  }
  double prev = std::log(at.update(0.8));
  double delta = 0.0;
  for (int t = 0; t < 200; ++t) {
    const double cur = std::log(at.update(0.8));
    delta = std::abs(cur - prev);
    prev = cur;
  }
  EXPECT_LT(delta, 1e-3);
  EXPECT_EQ(at.iterations(), 201u);
}

TEST(Hmc, StandardNormalMoments) {
  HmcConfig cfg;
  cfg.burn_in = 500;
  cfg.samples = 5000;
  cfg.thin_to = 100;
  cfg.rng_seed = 51;
  const ChainResult r = sample_hmc(gaussian_target(Eigen::MatrixXd::Identity(3, 3)), Eigen::VectorXd::Zero(3), cfg);
  ASSERT_EQ(r.chain.size(), 5000u);
  for (Eigen::Index k = 0; k < 3; ++k) {
    double m = 0.0, v = 0.0;
    for (const auto& x : r.chain) m += x(k);
    m /= 5000.0;
    for (const auto& x : r.chain) v += (x(k) - m) * (x(k) - m);
    v /= 4999.0;
    EXPECT_NEAR(m, 0.0, 0.05);
    EXPECT_GT(v, 0.9);
    EXPECT_LT(v, 1.1);
  }
  double e = 0.0;
  for (double d : r.energy_errors) e += d;
  EXPECT_LT(e / static_cast<double>(r.energy_errors.size()), 1.0);
}

TEST(Hmc, CorrelatedGaussianCovariance) {
  Eigen::Matrix2d cov;
  cov << 1.0, 0.8, 0.8, 1.5;
  HmcConfig cfg;
  cfg.samples = 5000;
  cfg.rng_seed = 52;
  const ChainResult r = sample_hmc(gaussian_target(cov), Eigen::VectorXd::Zero(2), cfg);
  Eigen::Vector2d m = Eigen::Vector2d::Zero();
  for (const auto& x : r.chain) m += x;
  m /= 5000.0;
  Eigen::Matrix2d c = Eigen::Matrix2d::Zero();
  for (const auto& x : r.chain) c += (x - m) * (x - m).transpose();
  c /= 4999.0;
  EXPECT_LT((c - cov).cwiseAbs().maxCoeff(), 0.1);
}

TEST(Hmc, TinyStepAcceptsAlmostEverything) {
  HmcConfig cfg;
  cfg.burn_in = 0;
  cfg.samples = 1000;
  cfg.thin_to = 10;
  cfg.leapfrog_steps = 1;
  cfg.step_size = 1e-6;
  cfg.adapt_step_size = false;
  const ChainResult r = sample_hmc(gaussian_target(Eigen::MatrixXd::Identity(4, 4)), Eigen::VectorXd::Ones(4), cfg);
  EXPECT_GT(r.acceptance_rate, 0.999);
}

TEST(Hmc, ThinningIsEvenAndOrdered) {
  HmcConfig cfg;
  cfg.burn_in = 10;
  cfg.samples = 100;
  cfg.thin_to = 7;
  const ChainResult r = sample_hmc(gaussian_target(Eigen::MatrixXd::Identity(1, 1)), Eigen::VectorXd::Zero(1), cfg);
  ASSERT_EQ(r.thinned.size(), 7u);
  for (std::size_t k = 0; k < 7; ++k) EXPECT_EQ(r.thinned[k], (k + 1) * 14 - 1);
}

TEST(Hmc, DivergenceDetected) {
  HmcConfig cfg;
  cfg.burn_in = 0;
  cfg.samples = 50;
  cfg.thin_to = 5;
  cfg.adapt_step_size = false;
  cfg.step_size = 0.5;
  // Support is a thin slab; nearly every trajectory leaves it.
  const LogDensityFn slab = [](const Eigen::VectorXd& x) {
    if (std::abs(x(0)) > 1e-3) return LogDensityValue{-INFINITY, Eigen::VectorXd::Zero(1)};
    return LogDensityValue{0.0, Eigen::VectorXd::Zero(1)};
  };
  EXPECT_THROW(sample_hmc(slab, Eigen::VectorXd::Zero(1), cfg), ChainDiverged);
}

TEST(Hmc, ConfigValidation) {
  HmcConfig cfg;
  cfg.thin_to = cfg.samples + 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  MapConfig m;
  m.restarts = 0;
  EXPECT_THROW(m.validate(), ConfigError);
}

TEST(Hmc, RunIsDeterministic) {
  const Dataset data = toy_data(10, 53);
  HmcConfig cfg;
  cfg.burn_in = 30;
  cfg.samples = 60;
  cfg.thin_to = 6;
  cfg.rng_seed = 9;
  const auto a = run_hmc(data, PriorSpec{}, TreeStructure::symmetric(2), cfg);
  const auto b = run_hmc(data, PriorSpec{}, TreeStructure::symmetric(2), cfg);
  ASSERT_EQ(a.size(), 6u);
  const ParameterLayout layout(TreeStructure::symmetric(2), 2);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(layout.flatten(a.draws[i]), layout.flatten(b.draws[i]));
    EXPECT_EQ(a.log_posterior[i], b.log_posterior[i]);
  }
  cfg.rng_seed = 10;
  const auto c = run_hmc(data, PriorSpec{}, TreeStructure::symmetric(2), cfg);
  EXPECT_NE(layout.flatten(a.draws.back()), layout.flatten(c.draws.back()));
}

TEST(GradientAscent, QuadraticToy) {
  const LogDensityFn f = [](const Eigen::VectorXd& x) { return LogDensityValue{-0.5 * x.squaredNorm(), -x}; };
  const AscentResult r = gradient_ascent(f, Eigen::Vector3d(2.0, -1.0, 0.5), 500, 1e-9);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.argmax.norm(), 1e-6);
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_GE(r.trace[i], r.trace[i - 1]);
}

TEST(GradientAscent, IllConditionedMonotone) {
  const Eigen::Vector2d scale(1.0, 100.0);
  const LogDensityFn f = [&](const Eigen::VectorXd& x) {
    return LogDensityValue{-0.5 * (scale.array() * x.array().square()).sum(), -(scale.array() * x.array()).matrix()};
  };
  const AscentResult r = gradient_ascent(f, Eigen::Vector2d(1.0, 1.0), 2000, 1e-8);
  EXPECT_TRUE(r.converged);
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_GE(r.trace[i], r.trace[i - 1]);
}

TEST(Map, RestartsAgreeOnUnimodalTarget) {
  // J = 1 with noisy data keeps the mode away from the zero-noise boundary.
  const Dataset data = toy_data(25, 54, 0.3);
  MapConfig cfg;
  cfg.restarts = 3;
  cfg.max_iters = 3000;
  cfg.grad_tol = 1e-6;
  cfg.rng_seed = 4;
  const auto ends = map_restarts(data, PriorSpec{}, TreeStructure::symmetric(1), cfg);
  ASSERT_EQ(ends.size(), 3u);
  double best = -INFINITY;
  for (const auto& e : ends) best = std::max(best, e.value);
  std::size_t close = 0;
  for (const auto& e : ends) {
    close += std::abs(e.value - best) < 1e-6 ? 1 : 0;
  }
  EXPECT_GE(close, 2u);
  const auto map = run_map(data, PriorSpec{}, TreeStructure::symmetric(1), cfg);
  ASSERT_EQ(map.size(), 1u);
  EXPECT_EQ(map.log_posterior[0], best);
  for (const auto& e : ends) EXPECT_GE(map.log_posterior[0], e.value);
}

TEST(Samples, RoundTripThroughText) {
  const Dataset data = toy_data(8, 55);
  HmcConfig cfg;
  cfg.burn_in = 20;
  cfg.samples = 40;
  cfg.thin_to = 4;
  const auto s = run_hmc(data, PriorSpec{}, TreeStructure::symmetric(4), cfg);
  std::stringstream buf;
  write_samples(buf, s);
  const auto back = read_samples(buf);
  const ParameterLayout layout(TreeStructure::symmetric(4), 2);
  ASSERT_EQ(back.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(layout.flatten(back.draws[i]), layout.flatten(s.draws[i]));
    EXPECT_EQ(back.log_posterior[i], s.log_posterior[i]);
  }
  EXPECT_EQ(back.diagnostics.method, "hmc");
  std::stringstream bad("draw,log_posterior\n0,1\n");
  EXPECT_THROW(read_samples(bad), ParseError);
}

TEST(Samples, MapDrawIsHighestPosterior) {
  PosteriorSampleSet s;
  HhkParams p;
  p.leaf_lengthscales = Eigen::MatrixXd::Ones(1, 1);
  p.leaf_variances = Eigen::VectorXd::Ones(1);
  for (double v : {1.0, 3.0, 3.0, 2.0}) {
    p.noise_var = v;
    s.draws.push_back(p);
    s.log_posterior.push_back(v);
  }
  s.draws[2].noise_var = 7.0;
  EXPECT_EQ(s.map_draw().noise_var, 3.0);
}
