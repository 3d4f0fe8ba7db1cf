#include "hhk/linalg.hpp"

#include <cmath>
#include <sstream>

#include "hhk/errors.hpp"

namespace hhk::linalg {

std::optional<Eigen::MatrixXd> cholesky(const Eigen::MatrixXd& a) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n) throw DimensionMismatch("cholesky: matrix is not square");
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0) || !std::isfinite(diag)) return std::nullopt;
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

JitteredCholesky cholesky_with_jitter(const Eigen::MatrixXd& a) {
  if (auto l = cholesky(a)) return {std::move(*l), 0.0};
  const Eigen::Index n = a.rows();
  double scale = n > 0 ? a.diagonal().mean() : 1.0;
  if (!(scale > 0.0) || !std::isfinite(scale)) scale = 1.0;
  for (double rel = 1e-10; rel <= 1e-4 * (1.0 + 1e-9); rel *= 10.0) {
    Eigen::MatrixXd b = a;
    b.diagonal().array() += rel * scale;
    if (auto l = cholesky(b)) return {std::move(*l), rel * scale};
  }
  std::ostringstream msg;
  msg << "Cholesky failed for a " << n << "x" << n << " matrix even with jitter 1e-4*mean(diag)";
  throw NonPositiveDefinite(msg.str());
}

Eigen::VectorXd solve_lower(const Eigen::MatrixXd& lower, const Eigen::VectorXd& b) {
  const Eigen::Index n = lower.rows();
  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = b(i);
    for (Eigen::Index k = 0; k < i; ++k) s -= lower(i, k) * x(k);
    x(i) = s / lower(i, i);
  }
  return x;
}

Eigen::VectorXd solve_lower_transposed(const Eigen::MatrixXd& lower, const Eigen::VectorXd& b) {
  const Eigen::Index n = lower.rows();
  Eigen::VectorXd x(n);
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    double s = b(i);
    for (Eigen::Index k = i + 1; k < n; ++k) s -= lower(k, i) * x(k);
    x(i) = s / lower(i, i);
  }
  return x;
}

Eigen::VectorXd cholesky_solve(const Eigen::MatrixXd& lower, const Eigen::VectorXd& b) {
  return solve_lower_transposed(lower, solve_lower(lower, b));
}

Eigen::MatrixXd cholesky_inverse(const Eigen::MatrixXd& lower) {
  const Eigen::Index n = lower.rows();
  // L⁻¹ column by column, then (L⁻¹)ᵀ L⁻¹.
  Eigen::MatrixXd linv = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    linv(c, c) = 1.0 / lower(c, c);
    for (Eigen::Index i = c + 1; i < n; ++i) {
      double s = 0.0;
      for (Eigen::Index k = c; k < i; ++k) s -= lower(i, k) * linv(k, c);
      linv(i, c) = s / lower(i, i);
    }
  }
  Eigen::MatrixXd inv(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      double s = 0.0;
      for (Eigen::Index k = i; k < n; ++k) s += linv(k, i) * linv(k, j);
      inv(i, j) = s;
      inv(j, i) = s;
    }
  }
  return inv;
}

double cholesky_log_det(const Eigen::MatrixXd& lower) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < lower.rows(); ++i) s += std::log(lower(i, i));
  return 2.0 * s;
}

}  // namespace hhk::linalg
