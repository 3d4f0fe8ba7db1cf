#include "hhk/predictive.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>

#include "hhk/errors.hpp"

namespace hhk {

double PredictiveMixture::mean() const {
  if (means.empty()) throw DomainError("empty predictive mixture");
  double s = 0.0;
  for (double m : means) s += m;
  return s / static_cast<double>(means.size());
}

double PredictiveMixture::variance() const {
  const double mu = mean();
  double s = 0.0;
  for (std::size_t i = 0; i < means.size(); ++i) s += variances[i] + means[i] * means[i];
  return std::max(s / static_cast<double>(means.size()) - mu * mu, 0.0);
}

double PredictiveMixture::density(double y) const {
  static const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  double s = 0.0;
  for (std::size_t i = 0; i < means.size(); ++i) {
    const double sd = std::sqrt(variances[i]);
    const double z = (y - means[i]) / sd;
    s += inv_sqrt_2pi * std::exp(-0.5 * z * z) / sd;
  }
  return s / static_cast<double>(means.size());
}

MixturePredictor::MixturePredictor(const PosteriorSampleSet& samples, const Dataset& data) : data_(data) {
  if (samples.draws.empty()) throw DomainError("mixture needs at least one posterior draw");
  for (std::size_t i = 0; i < samples.draws.size(); ++i) {
    const HhkParams& p = samples.draws[i];
    if (!data.empty() && p.dim() != data.dim()) throw DimensionMismatch("draw dimension differs from dataset");
    try {
      HhkKernel kernel(p);
      GramFactors f = factors_from_gram(kernel.gram(data.inputs()), data.outputs(), p.noise_var);
      Eigen::MatrixXd w = kernel.weights(data.inputs());
      components_.push_back(Component{i, std::move(kernel), std::move(f), std::move(w)});
    } catch (const Error& e) {
      if (e.kind() != "NonPositiveDefinite" && e.kind() != "DomainError") throw;
      ++dropped_;
      std::cerr << "warning: dropping posterior draw " << i << ": " << e.what() << '\n';
    }
  }
  const double n = static_cast<double>(samples.draws.size());
  if (components_.empty() || static_cast<double>(dropped_) > 0.1 * n) {
    std::ostringstream msg;
    msg << dropped_ << " of " << samples.draws.size() << " posterior draws failed to factorize";
    throw NonPositiveDefinite(msg.str());
  }
}

GaussianPrediction MixturePredictor::component(std::size_t c, PointView query) const {
  const Component& comp = components_.at(c);
  if (query.size() != comp.kernel.input_dim()) throw DimensionMismatch("query dimension differs from model");
  const Eigen::VectorXd k = comp.kernel.cross_with_weights(data_.inputs(), comp.input_weights, query);
  GaussianPrediction g = predict_from_cross(comp.factors, k, comp.kernel.eval(query, query));
  g.with_noise_variance = g.variance + comp.kernel.params().noise_var;
  return g;
}

PredictiveMixture MixturePredictor::at(PointView query) const {
  PredictiveMixture mix;
  mix.means.reserve(components_.size());
  mix.variances.reserve(components_.size());
  for (std::size_t c = 0; c < components_.size(); ++c) {
    const GaussianPrediction g = component(c, query);
    mix.means.push_back(g.mean);
    mix.variances.push_back(g.with_noise_variance);
  }
  return mix;
}

PredictiveMixture mixture_at(const PosteriorSampleSet& samples, const Dataset& data, PointView query) {
  return MixturePredictor(samples, data).at(query);
}

std::pair<double, double> entropy_bounds(const PredictiveMixture& mix) {
  if (mix.means.empty() || mix.means.size() != mix.variances.size()) {
    throw DomainError("predictive mixture must have matching, non-empty means and variances");
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < mix.means.size(); ++i) {
    if (!(mix.variances[i] > 0.0) || !std::isfinite(mix.variances[i]) || !std::isfinite(mix.means[i])) {
      throw DomainError("mixture components need finite means and positive variances");
    }
    const double sd = std::sqrt(mix.variances[i]);
    lo = std::min(lo, mix.means[i] - 2.0 * sd);
    hi = std::max(hi, mix.means[i] + 2.0 * sd);
  }
  return {lo, hi};
}

double mixture_entropy(const PredictiveMixture& mix, const QuadratureOptions& opts) {
  const auto [lo, hi] = entropy_bounds(mix);
  double min_sd = std::numeric_limits<double>::infinity();
  for (double v : mix.variances) min_sd = std::min(min_sd, std::sqrt(v));

  auto integrand = [&](double y) {
    const double p = mix.density(y);
    return p > 0.0 ? -p * std::log(p) : 0.0;
  };

  // Composite Simpson; refinement keeps old nodes as the new even nodes.
  std::size_t intervals = std::max<std::size_t>(2, opts.initial_nodes - 1);
  if (intervals % 2 != 0) ++intervals;
  const double width = hi - lo;
  double h = width / static_cast<double>(intervals);
  const double ends = integrand(lo) + integrand(hi);
  double odd = 0.0, even = 0.0;
  for (std::size_t k = 1; k < intervals; ++k) (k % 2 ? odd : even) += integrand(lo + static_cast<double>(k) * h);
  double estimate = h / 3.0 * (ends + 4.0 * odd + 2.0 * even);

  while (intervals < opts.max_intervals) {
    intervals *= 2;
    h = width / static_cast<double>(intervals);
    even += odd;
    odd = 0.0;
    for (std::size_t k = 1; k < intervals; k += 2) odd += integrand(lo + static_cast<double>(k) * h);
    const double next = h / 3.0 * (ends + 4.0 * odd + 2.0 * even);
    const double delta = std::abs(next - estimate);
    estimate = next;
    // Narrow components can hide between coarse nodes.
    if (delta < opts.tolerance && h <= min_sd) return estimate;
  }
  std::ostringstream msg;
  msg << "entropy quadrature did not converge within " << opts.max_intervals << " intervals";
  throw QuadratureNotConverged(msg.str());
}

}  // namespace hhk
