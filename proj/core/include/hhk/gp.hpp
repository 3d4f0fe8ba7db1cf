#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hhk/dataset.hpp"
#include "hhk/types.hpp"

namespace hhk {

/// Covariance function on R^d. Implementations are immutable and thread-safe.
class Kernel {
 public:
  virtual ~Kernel() = default;

  virtual std::size_t input_dim() const = 0;
  virtual double eval(PointView x, PointView y) const = 0;

  /// T×T Gram matrix; symmetric by construction.
  virtual Eigen::MatrixXd gram(const PointMatrix& inputs) const;
  /// Column of cross-covariances k(x_t, query).
  virtual Eigen::VectorXd cross(const PointMatrix& inputs, PointView query) const;
};

using KernelHandle = std::shared_ptr<const Kernel>;

/// Cholesky state of K_T + σ²I for one dataset/kernel/noise triple.
struct GramFactors {
  Eigen::MatrixXd gram;       // K_T (without noise)
  Eigen::MatrixXd chol;       // lower factor of K_T + (σ² + jitter) I
  Eigen::VectorXd alpha_vec;  // (K_T + σ²I)⁻¹ y
  double noise_var = 0.0;
  double jitter = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(alpha_vec.size()); }
};

struct GaussianPrediction {
  double mean = 0.0;
  double variance = 0.0;             // latent f
  double with_noise_variance = 0.0;  // variance + σ²
};

// The prior mean is identically zero: outputs are standardized upstream.

GramFactors build_factors(const Dataset& data, const Kernel& kernel, double noise_var);
/// Same as build_factors, for callers that already hold K_T.
GramFactors factors_from_gram(Eigen::MatrixXd gram, const Eigen::VectorXd& outputs,
                              double noise_var);

GaussianPrediction predict(const GramFactors& factors, const Dataset& data, const Kernel& kernel,
                           PointView query);
/// Prediction from a precomputed cross-covariance column and prior variance k(x*,x*).
GaussianPrediction predict_from_cross(const GramFactors& factors, const Eigen::VectorXd& cross,
                                      double prior_variance);

double log_marginal_likelihood(const Dataset& data, const Kernel& kernel, double noise_var);
double log_marginal_likelihood(const GramFactors& factors, const Eigen::VectorXd& outputs);

/// W = α αᵀ − (K + σ²I)⁻¹. The LML derivative along any dK/dθ is ½ tr(W dK/dθ).
Eigen::MatrixXd lml_weight_matrix(const GramFactors& factors);

/// Gradient of the log marginal likelihood over (kernel params..., noise_var),
/// given one dK/dθ matrix per kernel parameter.
Eigen::VectorXd lml_gradient(const Dataset& data, const Kernel& kernel, double noise_var,
                             std::span<const Eigen::MatrixXd> kernel_param_grads);

}  // namespace hhk
