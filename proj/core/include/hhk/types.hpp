#pragma once

#include <cstddef>
#include <span>

#include <Eigen/Core>

namespace hhk {

/// Row-major so that every point (row) is contiguous and can be viewed as a span.
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using PointView = std::span<const double>;

inline PointView row_view(const PointMatrix& m, Eigen::Index i) {
  return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

inline PointView as_view(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace hhk
