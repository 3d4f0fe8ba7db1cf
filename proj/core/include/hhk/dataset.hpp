#pragma once

#include <cstddef>

#include "hhk/types.hpp"

namespace hhk {

/// Observations with inputs in the unit cube. Outputs are whatever units the
/// caller chooses; the GP layer expects them standardized.
class Dataset {
 public:
  Dataset() = default;
  /// Empty dataset of the given input dimension.
  explicit Dataset(std::size_t dim);
  /// Throws LengthMismatch if row counts differ and DomainError if any input
  /// coordinate is outside [0,1] or non-finite.
  Dataset(PointMatrix inputs, Eigen::VectorXd outputs);

  std::size_t size() const { return static_cast<std::size_t>(outputs_.size()); }
  std::size_t dim() const { return static_cast<std::size_t>(inputs_.cols()); }
  bool empty() const { return size() == 0; }

  const PointMatrix& inputs() const { return inputs_; }
  const Eigen::VectorXd& outputs() const { return outputs_; }
  PointView input(std::size_t t) const { return row_view(inputs_, static_cast<Eigen::Index>(t)); }

  /// Copy with one observation appended.
  Dataset with_point(PointView x, double y) const;
  /// Copy with outputs replaced.
  Dataset with_outputs(Eigen::VectorXd outputs) const;

 private:
  PointMatrix inputs_;
  Eigen::VectorXd outputs_;
};

}  // namespace hhk
