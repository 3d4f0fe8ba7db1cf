#include "hhk/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hhk/errors.hpp"
#include "hhk/linalg.hpp"

namespace hhk {

PointMatrix regular_grid(std::size_t dim, std::size_t resolution) {
  if (dim == 0 || resolution == 0) throw DomainError("grid needs positive dimension and resolution");
  std::size_t count = 1;
  for (std::size_t m = 0; m < dim; ++m) count *= resolution;
  PointMatrix grid(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  const double step = resolution > 1 ? 1.0 / static_cast<double>(resolution - 1) : 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t rest = i;
    for (std::size_t m = dim; m-- > 0;) {
      const std::size_t k = rest % resolution;
      rest /= resolution;
      grid(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) =
          resolution > 1 ? static_cast<double>(k) * step : 0.5;
    }
  }
  return grid;
}

ActivationMap activation_map(const PosteriorSampleSet& samples, std::size_t grid_resolution) {
  ActivationMap out;
  out.map_params = samples.map_draw();
  out.grid = regular_grid(out.map_params.dim(), grid_resolution);
  out.weights = HhkKernel(out.map_params).weights(out.grid);
  out.mean_activation = out.weights.colwise().mean().transpose();
  out.ranking.resize(static_cast<std::size_t>(out.mean_activation.size()));
  std::iota(out.ranking.begin(), out.ranking.end(), std::size_t{0});
  std::stable_sort(out.ranking.begin(), out.ranking.end(), [&](std::size_t a, std::size_t b) {
    return out.mean_activation(static_cast<Eigen::Index>(a)) > out.mean_activation(static_cast<Eigen::Index>(b));
  });
  return out;
}

double shannon_information(const PointMatrix& points, const Kernel& kernel, double noise_var) {
  if (!(noise_var > 0.0)) throw DomainError("noise variance must be positive");
  if (points.rows() == 0) return 0.0;
  Eigen::MatrixXd m = kernel.gram(points) / noise_var;
  m.diagonal().array() += 1.0;
  const auto chol = linalg::cholesky(m);
  if (!chol) throw NonPositiveDefinite("I + K/noise is not positive definite");
  return 0.5 * linalg::cholesky_log_det(*chol);
}

GreedyDesign greedy_design(const PointMatrix& pool, const Kernel& kernel, double noise_var, std::size_t T) {
  if (!(noise_var > 0.0)) throw DomainError("noise variance must be positive");
  if (static_cast<std::size_t>(pool.rows()) < T) throw EmptyPool("pool is smaller than the design size");
  const Eigen::Index n = pool.rows();
  const Eigen::MatrixXd k_pool = kernel.gram(pool);

  GreedyDesign out;
  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  out.selected.resize(0, pool.cols());
  for (std::size_t step = 0; step < T; ++step) {
    const Eigen::Index a = static_cast<Eigen::Index>(out.indices.size());
    Eigen::MatrixXd ka(a, a);
    for (Eigen::Index i = 0; i < a; ++i) {
      for (Eigen::Index j = 0; j < a; ++j) {
        ka(i, j) = k_pool(static_cast<Eigen::Index>(out.indices[i]), static_cast<Eigen::Index>(out.indices[j]));
      }
    }
    ka.diagonal().array() += noise_var;
    Eigen::MatrixXd lower;
    if (a > 0) {
      auto chol = linalg::cholesky(ka);
      if (!chol) throw NonPositiveDefinite("design Gram matrix is not positive definite");
      lower = std::move(*chol);
    }
    double best_var = -std::numeric_limits<double>::infinity();
    Eigen::Index best = -1;
    Eigen::VectorXd kx(a);
    for (Eigen::Index x = 0; x < n; ++x) {
      if (taken[static_cast<std::size_t>(x)]) continue;
      double var = k_pool(x, x);
      if (a > 0) {
        for (Eigen::Index i = 0; i < a; ++i) kx(i) = k_pool(static_cast<Eigen::Index>(out.indices[i]), x);
        var -= linalg::solve_lower(lower, kx).squaredNorm();
      }
      var = std::max(var, 0.0);
      if (var > best_var) {
        best_var = var;
        best = x;
      }
    }
    taken[static_cast<std::size_t>(best)] = true;
    out.indices.push_back(static_cast<std::size_t>(best));
    out.variances.push_back(best_var);
    out.selected.conservativeResize(a + 1, Eigen::NoChange);
    out.selected.row(a) = pool.row(best);
    out.info.push_back(shannon_information(out.selected, kernel, noise_var));
  }
  return out;
}

}  // namespace hhk
