#pragma once

#include <vector>

#include <Eigen/Core>

#include "hhk/kernels.hpp"

namespace fixtures {

// Caterpillar tree over the unit square: x0 < 0.4 | (x1 < 0.5 | rest).
inline hhk::SharpPartitionKernel three_regions(double var0, double var1, double var2, double l0, double l1, double l2) {
  const std::vector<std::vector<int>> L{{1, 0}, {0, 1}, {0, 0}};
  const std::vector<std::vector<int>> R{{0, 0}, {1, 0}, {1, 1}};
  return hhk::SharpPartitionKernel(hhk::TreeStructure::from_tables(L, R),
                                   {Eigen::Vector3d(0.4, -1.0, 0.0), Eigen::Vector3d(0.5, 0.0, -1.0)},
                                   {hhk::RbfKernel(Eigen::Vector2d::Constant(l0), var0),
                                    hhk::RbfKernel(Eigen::Vector2d::Constant(l1), var1),
                                    hhk::RbfKernel(Eigen::Vector2d::Constant(l2), var2)});
}

}  // namespace fixtures
