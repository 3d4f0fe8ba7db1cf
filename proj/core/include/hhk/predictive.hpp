#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "hhk/dataset.hpp"
#include "hhk/gp.hpp"
#include "hhk/inference.hpp"
#include "hhk/kernels.hpp"

namespace hhk {

/// Equally weighted Gaussian mixture over posterior draws at one query point.
struct PredictiveMixture {
  std::vector<double> means;
  std::vector<double> variances;  // observation level: latent + noise

  std::size_t size() const { return means.size(); }
  double mean() const;
  double variance() const;
  double density(double y) const;
};

/// Per-draw GP posteriors prepared once for many queries. Draws whose Gram
/// matrix cannot be factorized (or whose values are invalid) are dropped with
/// a warning; more than 10% of the draws failing raises NonPositiveDefinite.
class MixturePredictor {
 public:
  MixturePredictor(const PosteriorSampleSet& samples, const Dataset& data);

  PredictiveMixture at(PointView query) const;
  /// Latent prediction of component c (index among retained components).
  GaussianPrediction component(std::size_t c, PointView query) const;

  std::size_t size() const { return components_.size(); }
  std::size_t dropped() const { return dropped_; }
  /// Original draw index of retained component c.
  std::size_t draw_index(std::size_t c) const { return components_[c].draw; }

 private:
  struct Component {
    std::size_t draw;
    HhkKernel kernel;
    GramFactors factors;
    Eigen::MatrixXd input_weights;
  };
  Dataset data_;
  std::vector<Component> components_;
  std::size_t dropped_ = 0;
};

PredictiveMixture mixture_at(const PosteriorSampleSet& samples, const Dataset& data, PointView query);

struct QuadratureOptions {
  std::size_t initial_nodes = 129;
  std::size_t max_intervals = std::size_t{1} << 17;
  double tolerance = 1e-7;
};

/// −∫ p log p over [min_i(μ_i − 2σ_i), max_i(μ_i + 2σ_i)] by composite Simpson,
/// doubling the node count until successive estimates agree to the tolerance.
/// Throws QuadratureNotConverged when the node budget runs out.
double mixture_entropy(const PredictiveMixture& mix, const QuadratureOptions& opts = {});

/// [lower, upper] integration bounds used by mixture_entropy.
std::pair<double, double> entropy_bounds(const PredictiveMixture& mix);

}  // namespace hhk
