#include "hhk/dataset.hpp"

#include <cmath>
#include <sstream>

#include "hhk/errors.hpp"

namespace hhk {

Dataset::Dataset(std::size_t dim) : inputs_(0, static_cast<Eigen::Index>(dim)), outputs_(0) {}

Dataset::Dataset(PointMatrix inputs, Eigen::VectorXd outputs)
    : inputs_(std::move(inputs)), outputs_(std::move(outputs)) {
  if (inputs_.rows() != outputs_.size()) {
    std::ostringstream msg;
    msg << "dataset has " << inputs_.rows() << " input rows but " << outputs_.size() << " outputs";
    throw LengthMismatch(msg.str());
  }
  for (Eigen::Index t = 0; t < inputs_.rows(); ++t) {
    for (Eigen::Index m = 0; m < inputs_.cols(); ++m) {
      const double v = inputs_(t, m);
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        std::ostringstream msg;
        msg << "input (" << t << ", " << m << ") = " << v << " is outside the unit cube";
        throw DomainError(msg.str());
      }
    }
    if (!std::isfinite(outputs_(t))) throw DomainError("non-finite output in dataset");
  }
}

Dataset Dataset::with_point(PointView x, double y) const {
  if (x.size() != dim()) throw DimensionMismatch("with_point: point dimension differs from dataset");
  PointMatrix in(inputs_.rows() + 1, inputs_.cols());
  in.topRows(inputs_.rows()) = inputs_;
  for (std::size_t m = 0; m < x.size(); ++m) in(inputs_.rows(), static_cast<Eigen::Index>(m)) = x[m];
  Eigen::VectorXd out(outputs_.size() + 1);
  out.head(outputs_.size()) = outputs_;
  out(outputs_.size()) = y;
  return Dataset(std::move(in), std::move(out));
}

Dataset Dataset::with_outputs(Eigen::VectorXd outputs) const { return Dataset(inputs_, std::move(outputs)); }

}  // namespace hhk
