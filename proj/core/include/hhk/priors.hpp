#pragma once

#include <cstdint>
#include <random>
#include <string>

#include <Eigen/Core>

#include "hhk/dataset.hpp"
#include "hhk/kernels.hpp"

namespace hhk {

enum class PriorFamily { Gamma, Normal, Exponential };

/// One univariate prior. Gamma is shape–rate, Exponential is rate, Normal is
/// mean–standard deviation.
struct PriorDist {
  PriorFamily family = PriorFamily::Normal;
  double a = 0.0;  // shape | mean | rate
  double b = 1.0;  // rate  | sd   | unused

  static PriorDist gamma(double shape, double rate) { return {PriorFamily::Gamma, shape, rate}; }
  static PriorDist normal(double mean, double sd) { return {PriorFamily::Normal, mean, sd}; }
  static PriorDist exponential(double rate) { return {PriorFamily::Exponential, rate, 0.0}; }

  bool positive_support() const { return family != PriorFamily::Normal; }
  double log_density(double x) const;
  /// d/dx log p(x).
  double dlog_density(double x) const;
  double sample(std::mt19937_64& rng) const;
  void validate() const;
  std::string describe() const;
};

/// Independent priors per parameter group. Defaults are the table values:
/// l ~ Gamma(2,2), σ_j² ~ Gamma(2,3), α ~ Gamma(6,2), w̃ ~ N(0,1), σ² ~ Exp(10).
struct PriorSpec {
  PriorDist lengthscale = PriorDist::gamma(2.0, 2.0);
  PriorDist variance = PriorDist::gamma(2.0, 3.0);
  PriorDist relevance = PriorDist::gamma(6.0, 2.0);
  PriorDist direction = PriorDist::normal(0.0, 1.0);
  PriorDist noise = PriorDist::exponential(10.0);

  /// Throws ConfigError on non-positive hyperparameters or a real-line prior
  /// on a positive parameter.
  void validate() const;
};

double log_prior(const HhkParams& params, const PriorSpec& spec);
/// Gradient over the constrained flat layout.
Eigen::VectorXd log_prior_gradient(const HhkParams& params, const PriorSpec& spec);

/// Draw Θ from the prior.
HhkParams sample_prior(const ParameterLayout& layout, const PriorSpec& spec, std::mt19937_64& rng);

/// Positive entries map through log; directions pass through unchanged.
Eigen::VectorXd to_unconstrained(const ParameterLayout& layout, const HhkParams& params);
/// Inverse of to_unconstrained; positive entries are clamped to
/// [1e-300, 1e300] so the result is always a valid HhkParams.
HhkParams from_unconstrained(const ParameterLayout& layout, const Eigen::VectorXd& u);

struct LogDensityValue {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

/// log p(y | Θ) + log p(Θ) + log|∂Θ/∂u| at Θ = from_unconstrained(u), with its
/// gradient in u. Returns −∞ with a zero gradient when the Gram matrix cannot
/// be factorized or any term is non-finite.
LogDensityValue log_posterior_unconstrained(const ParameterLayout& layout, const Eigen::VectorXd& u,
                                            const Dataset& data, const PriorSpec& spec);

}  // namespace hhk
