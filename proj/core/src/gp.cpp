#include "hhk/gp.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "hhk/errors.hpp"
#include "hhk/linalg.hpp"

namespace hhk {

Eigen::MatrixXd Kernel::gram(const PointMatrix& inputs) const {
  const Eigen::Index n = inputs.rows();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double v = eval(row_view(inputs, i), row_view(inputs, j));
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

Eigen::VectorXd Kernel::cross(const PointMatrix& inputs, PointView query) const {
  Eigen::VectorXd k(inputs.rows());
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) k(i) = eval(row_view(inputs, i), query);
  return k;
}

namespace {

void check_noise(double noise_var) {
  if (!(noise_var > 0.0) || !std::isfinite(noise_var)) {
    std::ostringstream msg;
    msg << "noise variance must be positive, got " << noise_var;
    throw DomainError(msg.str());
  }
}

void check_kernel_dim(const Dataset& data, const Kernel& kernel) {
  if (!data.empty() && data.dim() != kernel.input_dim()) {
    throw DimensionMismatch("kernel input dimension differs from dataset dimension");
  }
}

}  // namespace

GramFactors factors_from_gram(Eigen::MatrixXd gram, const Eigen::VectorXd& outputs, double noise_var) {
  check_noise(noise_var);
  if (gram.rows() != outputs.size() || gram.cols() != outputs.size()) {
    throw LengthMismatch("Gram matrix size differs from output count");
  }
  GramFactors f;
  f.noise_var = noise_var;
  Eigen::MatrixXd noisy = gram;
  noisy.diagonal().array() += noise_var;
  auto chol = linalg::cholesky_with_jitter(noisy);
  f.gram = std::move(gram);
  f.chol = std::move(chol.lower);
  f.jitter = chol.jitter;
  f.alpha_vec = linalg::cholesky_solve(f.chol, outputs);
  return f;
}

GramFactors build_factors(const Dataset& data, const Kernel& kernel, double noise_var) {
  check_noise(noise_var);
  check_kernel_dim(data, kernel);
  return factors_from_gram(kernel.gram(data.inputs()), data.outputs(), noise_var);
}

GaussianPrediction predict_from_cross(const GramFactors& factors, const Eigen::VectorXd& cross,
                                      double prior_variance) {
  GaussianPrediction p;
  if (factors.size() == 0) {
    p.mean = 0.0;
    p.variance = std::max(prior_variance, 0.0);
  } else {
    p.mean = cross.dot(factors.alpha_vec);
    const Eigen::VectorXd v = linalg::solve_lower(factors.chol, cross);
    p.variance = std::max(prior_variance - v.squaredNorm(), 0.0);
  }
  p.with_noise_variance = p.variance + factors.noise_var;
  return p;
}

GaussianPrediction predict(const GramFactors& factors, const Dataset& data, const Kernel& kernel,
                           PointView query) {
  if (query.size() != kernel.input_dim()) {
    std::ostringstream msg;
    msg << "query has dimension " << query.size() << ", kernel expects " << kernel.input_dim();
    throw DimensionMismatch(msg.str());
  }
  check_kernel_dim(data, kernel);
  if (factors.size() != data.size()) throw LengthMismatch("factors were built from a different dataset");
  return predict_from_cross(factors, kernel.cross(data.inputs(), query), kernel.eval(query, query));
}

double log_marginal_likelihood(const GramFactors& factors, const Eigen::VectorXd& outputs) {
  const auto n = static_cast<double>(outputs.size());
  if (outputs.size() == 0) return 0.0;
  return -0.5 * outputs.dot(factors.alpha_vec) - 0.5 * linalg::cholesky_log_det(factors.chol) -
         0.5 * n * std::log(2.0 * std::numbers::pi);
}

double log_marginal_likelihood(const Dataset& data, const Kernel& kernel, double noise_var) {
  if (data.empty()) {
    check_noise(noise_var);
    return 0.0;
  }
  return log_marginal_likelihood(build_factors(data, kernel, noise_var), data.outputs());
}

Eigen::MatrixXd lml_weight_matrix(const GramFactors& factors) {
  if (factors.size() == 0) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd w = factors.alpha_vec * factors.alpha_vec.transpose();
  w -= linalg::cholesky_inverse(factors.chol);
  return w;
}

Eigen::VectorXd lml_gradient(const Dataset& data, const Kernel& kernel, double noise_var,
                             std::span<const Eigen::MatrixXd> kernel_param_grads) {
  const auto n_params = static_cast<Eigen::Index>(kernel_param_grads.size());
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(n_params + 1);
  if (data.empty()) {
    check_noise(noise_var);
    return grad;
  }
  const GramFactors f = build_factors(data, kernel, noise_var);
  const Eigen::MatrixXd w = lml_weight_matrix(f);
  for (Eigen::Index p = 0; p < n_params; ++p) {
    const Eigen::MatrixXd& dk = kernel_param_grads[static_cast<std::size_t>(p)];
    if (dk.rows() != w.rows() || dk.cols() != w.cols()) {
      throw DimensionMismatch("dK/dθ matrix size differs from the dataset size");
    }
    grad(p) = 0.5 * w.cwiseProduct(dk).sum();
  }
  grad(n_params) = 0.5 * w.trace();
  return grad;
}

}  // namespace hhk
