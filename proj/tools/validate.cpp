#include "validate.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <string>

#include <Eigen/Eigenvalues>

#include "hhk/active_learning.hpp"
#include "hhk/kernels.hpp"
#include "hhk/predictive.hpp"
#include "hhk/priors.hpp"

namespace hhk::tools {

namespace {

HhkParams random_params(std::size_t leaves, std::size_t dim, std::mt19937_64& rng) {
  const ParameterLayout layout(TreeStructure::symmetric(leaves), dim);
  return sample_prior(layout, PriorSpec{}, rng);
}

PointMatrix random_points(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
  return x;
}

double check_weights(std::mt19937_64& rng) {
  double worst = 0.0;
  for (std::size_t leaves : {1u, 2u, 4u, 8u}) {
    const HhkKernel k(random_params(leaves, 2, rng));
    const Eigen::MatrixXd w = k.weights(random_points(50, 2, rng));
    worst = std::max(worst, (w.rowwise().sum().array() - 1.0).abs().maxCoeff());
  }
  return worst;
}

double check_psd(std::mt19937_64& rng) {
  double lowest = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const HhkKernel k(random_params(8, 2, rng));
    const Eigen::MatrixXd g = k.gram(random_points(30, 2, rng));
    lowest = std::min(lowest, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(g).eigenvalues().minCoeff());
  }
  return lowest;
}

double check_change_hyperplane(std::mt19937_64& rng) {
  double worst = 0.0;
  for (std::size_t leaves : {2u, 4u, 8u}) {
    const HhkParams p = random_params(leaves, 3, rng);
    const KernelHandle ch = change_hyperplane_tree(p);
    const PointMatrix x = random_points(40, 3, rng);
    for (Eigen::Index i = 0; i + 1 < x.rows(); i += 2) {
      worst = std::max(worst, std::abs(ch->eval(row_view(x, i), row_view(x, i + 1)) -
                                       hhk_eval(p, row_view(x, i), row_view(x, i + 1))));
    }
  }
  return worst;
}

double check_gradient(std::mt19937_64& rng) {
  double worst = 0.0;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t leaves : {2u, 4u}) {
    const ParameterLayout layout(TreeStructure::symmetric(leaves), 2);
    const PointMatrix x = random_points(6, 2, rng);
    Eigen::VectorXd y(x.rows());
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = normal(rng);
    const Dataset data(x, y);
    const Eigen::VectorXd u = to_unconstrained(layout, sample_prior(layout, PriorSpec{}, rng));
    const LogDensityValue at = log_posterior_unconstrained(layout, u, data, PriorSpec{});
    for (Eigen::Index k = 0; k < u.size(); ++k) {
      Eigen::VectorXd up = u, dn = u;
      up(k) += 1e-5;
      dn(k) -= 1e-5;
      const double fd = (log_posterior_unconstrained(layout, up, data, PriorSpec{}).value -
                         log_posterior_unconstrained(layout, dn, data, PriorSpec{}).value) /
                        2e-5;
      worst = std::max(worst, std::abs(fd - at.gradient(k)) / std::max(1.0, std::abs(fd)));
    }
  }
  return worst;
}

double check_entropy() {
  PredictiveMixture mix{{-0.5, 0.3, 1.1}, {0.2, 0.5, 0.1}};
  const auto [lo, hi] = entropy_bounds(mix);
  const int n = 200000;
  const double h = (hi - lo) / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double p = mix.density(lo + i * h);
    const double f = p > 0.0 ? -p * std::log(p) : 0.0;
    s += (i == 0 || i == n) ? 0.5 * f : f;
  }
  return std::abs(mixture_entropy(mix) - s * h);
}

}  // namespace

int run_validation(std::uint64_t seed, std::ostream& out) {
  std::mt19937_64 rng(seed);
  int failures = 0;
  auto report = [&](const std::string& name, double value, bool ok) {
    out << (ok ? "PASS " : "FAIL ") << name << " (" << value << ")\n";
    if (!ok) ++failures;
  };
  double v = check_weights(rng);
  report("leaf weights sum to one", v, v <= 1e-12);
  v = check_psd(rng);
  report("Gram matrices positive semidefinite", v, v >= -1e-8);
  v = check_change_hyperplane(rng);
  report("change-hyperplane recursion matches direct sum", v, v <= 1e-12);
  v = check_gradient(rng);
  report("posterior gradient matches finite differences", v, v <= 1e-4);
  v = check_entropy();
  report("mixture entropy matches trapezoid rule", v, v <= 1e-6);
  v = std::abs(exp2d_function(1.0, 0.0) - std::exp(-1.0));
  report("exp2d reference value", v, v <= 1e-15);
  return failures;
}

}  // namespace hhk::tools
