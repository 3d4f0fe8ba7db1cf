#include "hhk/priors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "hhk/errors.hpp"
#include "hhk/gp.hpp"

namespace hhk {

namespace {

constexpr double kMinPositive = 1e-300;
constexpr double kMaxPositive = 1e300;

void require_positive(double x, const PriorDist& p) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    std::ostringstream msg;
    msg << p.describe() << " prior evaluated at non-positive value " << x;
    throw DomainError(msg.str());
  }
}

}  // namespace

double PriorDist::log_density(double x) const {
  switch (family) {
    case PriorFamily::Gamma:
      require_positive(x, *this);
      return a * std::log(b) - std::lgamma(a) + (a - 1.0) * std::log(x) - b * x;
    case PriorFamily::Exponential:
      require_positive(x, *this);
      return std::log(a) - a * x;
    case PriorFamily::Normal: {
      const double z = (x - a) / b;
      return -0.5 * std::log(2.0 * std::numbers::pi) - std::log(b) - 0.5 * z * z;
    }
  }
  return 0.0;
}

double PriorDist::dlog_density(double x) const {
  switch (family) {
    case PriorFamily::Gamma:
      require_positive(x, *this);
      return (a - 1.0) / x - b;
    case PriorFamily::Exponential:
      require_positive(x, *this);
      return -a;
    case PriorFamily::Normal:
      return -(x - a) / (b * b);
  }
  return 0.0;
}

double PriorDist::sample(std::mt19937_64& rng) const {
  switch (family) {
    case PriorFamily::Gamma:
      return std::gamma_distribution<double>(a, 1.0 / b)(rng);
    case PriorFamily::Exponential:
      return std::exponential_distribution<double>(a)(rng);
    case PriorFamily::Normal:
      return std::normal_distribution<double>(a, b)(rng);
  }
  return 0.0;
}

void PriorDist::validate() const {
  const bool ok = family == PriorFamily::Normal ? (std::isfinite(a) && b > 0.0 && std::isfinite(b))
                                                : (a > 0.0 && std::isfinite(a) &&
                                                   (family != PriorFamily::Gamma || (b > 0.0 && std::isfinite(b))));
  if (!ok) throw ConfigError("invalid prior hyperparameters: " + describe());
}

std::string PriorDist::describe() const {
  std::ostringstream s;
  switch (family) {
    case PriorFamily::Gamma: s << "Gamma(" << a << ", " << b << ")"; break;
    case PriorFamily::Exponential: s << "Exponential(" << a << ")"; break;
    case PriorFamily::Normal: s << "Normal(" << a << ", " << b << ")"; break;
  }
  return s.str();
}

void PriorSpec::validate() const {
  for (const auto* p : {&lengthscale, &variance, &relevance, &direction, &noise}) p->validate();
  for (const auto* p : {&lengthscale, &variance, &relevance, &noise}) {
    if (!p->positive_support()) throw ConfigError("positive parameters need a positive-support prior, got " + p->describe());
  }
}

namespace {

// Prior attached to flat entry k.
const PriorDist& prior_for(const ParameterLayout& layout, const PriorSpec& spec, std::size_t k) {
  if (k == layout.noise_index()) return spec.noise;
  if (layout.nodes() > 0 && k < layout.relevance_index(0)) return spec.direction;
  if (layout.nodes() > 0 && k < layout.relevance_index(0) + layout.nodes()) return spec.relevance;
  if (k < layout.variance_index(0)) return spec.lengthscale;
  return spec.variance;
}

}  // namespace

double log_prior(const HhkParams& params, const PriorSpec& spec) {
  params.validate();
  const ParameterLayout layout(params.tree, params.dim());
  const Eigen::VectorXd flat = layout.flatten(params);
  double lp = 0.0;
  for (std::size_t k = 0; k < layout.size(); ++k) lp += prior_for(layout, spec, k).log_density(flat(static_cast<Eigen::Index>(k)));
  return lp;
}

Eigen::VectorXd log_prior_gradient(const HhkParams& params, const PriorSpec& spec) {
  params.validate();
  const ParameterLayout layout(params.tree, params.dim());
  const Eigen::VectorXd flat = layout.flatten(params);
  Eigen::VectorXd g(flat.size());
  for (std::size_t k = 0; k < layout.size(); ++k) {
    g(static_cast<Eigen::Index>(k)) = prior_for(layout, spec, k).dlog_density(flat(static_cast<Eigen::Index>(k)));
  }
  return g;
}

HhkParams sample_prior(const ParameterLayout& layout, const PriorSpec& spec, std::mt19937_64& rng) {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(layout.size()));
  for (std::size_t k = 0; k < layout.size(); ++k) {
    double v = prior_for(layout, spec, k).sample(rng);
    if (layout.is_positive(k)) v = std::clamp(v, kMinPositive, kMaxPositive);
    flat(static_cast<Eigen::Index>(k)) = v;
  }
  return layout.unflatten(flat);
}

Eigen::VectorXd to_unconstrained(const ParameterLayout& layout, const HhkParams& params) {
  params.validate();
  Eigen::VectorXd u = layout.flatten(params);
  for (std::size_t k = 0; k < layout.size(); ++k) {
    if (layout.is_positive(k)) u(static_cast<Eigen::Index>(k)) = std::log(u(static_cast<Eigen::Index>(k)));
  }
  return u;
}

HhkParams from_unconstrained(const ParameterLayout& layout, const Eigen::VectorXd& u) {
  if (static_cast<std::size_t>(u.size()) != layout.size()) throw DimensionMismatch("unconstrained vector has wrong size");
  Eigen::VectorXd flat = u;
  for (std::size_t k = 0; k < layout.size(); ++k) {
    if (layout.is_positive(k)) {
      const auto kk = static_cast<Eigen::Index>(k);
      flat(kk) = std::clamp(std::exp(u(kk)), kMinPositive, kMaxPositive);
    }
  }
  return layout.unflatten(flat);
}

LogDensityValue log_posterior_unconstrained(const ParameterLayout& layout, const Eigen::VectorXd& u,
                                            const Dataset& data, const PriorSpec& spec) {
  const auto n_params = static_cast<Eigen::Index>(layout.size());
  LogDensityValue out;
  out.value = -std::numeric_limits<double>::infinity();
  out.gradient = Eigen::VectorXd::Zero(n_params);
  if (!u.allFinite()) return out;
  if (!data.empty() && data.dim() != layout.dim()) throw DimensionMismatch("dataset dimension differs from layout");

  const HhkParams params = from_unconstrained(layout, u);
  const Eigen::VectorXd flat = layout.flatten(params);

  double value = log_prior(params, spec);
  Eigen::VectorXd grad = log_prior_gradient(params, spec);

  if (!data.empty()) {
    try {
      const HhkKernel kernel(params);
      const GramFactors f = factors_from_gram(kernel.gram(data.inputs()), data.outputs(), params.noise_var);
      value += log_marginal_likelihood(f, data.outputs());
      const Eigen::MatrixXd w = lml_weight_matrix(f);
      const Eigen::VectorXd kg = hhk_gradient_contraction(params, data.inputs(), w);
      grad.head(kg.size()) += 0.5 * kg;
      grad(static_cast<Eigen::Index>(layout.noise_index())) += 0.5 * w.trace();
    } catch (const NonPositiveDefinite&) {
      return out;
    }
  }

  for (std::size_t k = 0; k < layout.size(); ++k) {
    if (!layout.is_positive(k)) continue;
    const auto kk = static_cast<Eigen::Index>(k);
    // Θ_k = exp(u_k): chain factor Θ_k, log-Jacobian u_k with derivative 1.
    grad(kk) = grad(kk) * flat(kk) + 1.0;
    value += u(kk);
  }
  if (!std::isfinite(value) || !grad.allFinite()) return out;
  out.value = value;
  out.gradient = std::move(grad);
  return out;
}

}  // namespace hhk
