#include <random>

#include <benchmark/benchmark.h>

#include "hhk/active_learning.hpp"
#include "hhk/gp.hpp"
#include "hhk/kernels.hpp"
#include "hhk/predictive.hpp"
#include "hhk/priors.hpp"

namespace {

using namespace hhk;

struct Problem {
  ParameterLayout layout;
  HhkParams params;
  Dataset data;
};

Problem make_problem(std::size_t leaves, std::size_t n, std::uint64_t seed = 11) {
  std::mt19937_64 rng(seed);
  ParameterLayout layout(TreeStructure::symmetric(leaves), 2);
  HhkParams params = sample_prior(layout, PriorSpec{}, rng);
  PointMatrix x = latin_hypercube(n, 2, rng);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = std::sin(6.0 * x(i, 0)) * x(i, 1);
  return {layout, params, Dataset(x, y)};
}

void BM_Gram(benchmark::State& state) {
  const Problem p = make_problem(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  const HhkKernel k(p.params);
  for (auto _ : state) benchmark::DoNotOptimize(k.gram(p.data.inputs()));
}
BENCHMARK(BM_Gram)->Args({1, 45})->Args({8, 45})->Args({8, 200});

void BM_LogPosteriorGradient(benchmark::State& state) {
  const Problem p = make_problem(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  const Eigen::VectorXd u = to_unconstrained(p.layout, p.params);
  for (auto _ : state) benchmark::DoNotOptimize(log_posterior_unconstrained(p.layout, u, p.data, PriorSpec{}));
}
BENCHMARK(BM_LogPosteriorGradient)->Args({1, 45})->Args({2, 45})->Args({8, 5})->Args({8, 45});

void BM_GradientMaterialized(benchmark::State& state) {
  const Problem p = make_problem(8, static_cast<std::size_t>(state.range(0)));
  const HhkKernel k(p.params);
  for (auto _ : state) {
    const auto dk = hhk_param_gradients(p.params, p.data.inputs());
    benchmark::DoNotOptimize(lml_gradient(p.data, k, p.params.noise_var, dk));
  }
}
BENCHMARK(BM_GradientMaterialized)->Arg(45);

void BM_MixtureEntropy(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  PredictiveMixture mix;
  for (int i = 0; i < state.range(0); ++i) {
    mix.means.push_back(n(rng));
    mix.variances.push_back(0.05 + 0.1 * std::abs(n(rng)));
  }
  for (auto _ : state) benchmark::DoNotOptimize(mixture_entropy(mix));
}
BENCHMARK(BM_MixtureEntropy)->Arg(1)->Arg(50)->Arg(100);

void BM_SelectQuery(benchmark::State& state) {
  const Problem p = make_problem(8, 45);
  std::mt19937_64 rng(5);
  PosteriorSampleSet samples;
  for (int i = 0; i < 50; ++i) {
    samples.draws.push_back(sample_prior(p.layout, PriorSpec{}, rng));
    samples.log_posterior.push_back(0.0);
  }
  const PointMatrix pool = latin_hypercube(static_cast<std::size_t>(state.range(0)), 2, rng);
  for (auto _ : state) benchmark::DoNotOptimize(select_query(samples, p.data, pool, Strategy::MaxInfoGain, rng));
}
BENCHMARK(BM_SelectQuery)->Arg(512)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
