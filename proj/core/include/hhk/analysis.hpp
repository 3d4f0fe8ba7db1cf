#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "hhk/gp.hpp"
#include "hhk/inference.hpp"
#include "hhk/kernels.hpp"
#include "hhk/types.hpp"

namespace hhk {

struct ActivationMap {
  PointMatrix grid;                  // resolution^d points in [0,1]^d
  Eigen::MatrixXd weights;           // grid.rows() × J
  HhkParams map_params;
  Eigen::VectorXd mean_activation;   // per leaf, over the grid
  std::vector<std::size_t> ranking;  // leaves by decreasing mean activation
};

/// Leaf weights of the highest-log-posterior draw on a regular grid.
ActivationMap activation_map(const PosteriorSampleSet& samples, std::size_t grid_resolution = 50);

/// ½ log|I + σ⁻² K_A|.
double shannon_information(const PointMatrix& points, const Kernel& kernel, double noise_var);

struct GreedyDesign {
  std::vector<std::size_t> indices;  // rows of the pool, in selection order
  PointMatrix selected;
  std::vector<double> info;          // information of each prefix (length 1..T)
  std::vector<double> variances;     // latent predictive variance at selection time
};

/// Greedy maximum-variance design under fixed kernel parameters; each step
/// picks the remaining pool point with the largest predictive variance.
GreedyDesign greedy_design(const PointMatrix& pool, const Kernel& kernel, double noise_var, std::size_t T);

/// Regular grid with `resolution` points per axis at k / (resolution − 1),
/// first coordinate varying slowest.
PointMatrix regular_grid(std::size_t dim, std::size_t resolution);

}  // namespace hhk
