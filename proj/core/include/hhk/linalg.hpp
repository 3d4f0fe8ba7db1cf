#pragma once

#include <optional>

#include <Eigen/Core>

// Small dense linear-algebra kernel: Cholesky with a jitter ladder and the
// triangular solves built on top of it. Matrices are at most a few hundred
// rows in every use in this project.
namespace hhk::linalg {

/// Plain Cholesky of a symmetric matrix; only the lower triangle is read.
/// Returns nullopt when a non-positive pivot is met.
std::optional<Eigen::MatrixXd> cholesky(const Eigen::MatrixXd& a);

struct JitteredCholesky {
  Eigen::MatrixXd lower;
  double jitter = 0.0;  // absolute amount added to the diagonal
};

/// Cholesky of `a`, retrying with diagonal jitter 1e-10·mean(diag), ×10 per
/// step, up to 1e-4·mean(diag). Throws NonPositiveDefinite past the ladder.
JitteredCholesky cholesky_with_jitter(const Eigen::MatrixXd& a);

/// Solves L x = b.
Eigen::VectorXd solve_lower(const Eigen::MatrixXd& lower, const Eigen::VectorXd& b);
/// Solves Lᵀ x = b.
Eigen::VectorXd solve_lower_transposed(const Eigen::MatrixXd& lower, const Eigen::VectorXd& b);
/// Solves (L Lᵀ) x = b.
Eigen::VectorXd cholesky_solve(const Eigen::MatrixXd& lower, const Eigen::VectorXd& b);
/// (L Lᵀ)⁻¹, symmetric.
Eigen::MatrixXd cholesky_inverse(const Eigen::MatrixXd& lower);
/// log|L Lᵀ|.
double cholesky_log_det(const Eigen::MatrixXd& lower);

}  // namespace hhk::linalg
