#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hhk/dataset.hpp"
#include "hhk/kernels.hpp"
#include "hhk/priors.hpp"

namespace hhk {

struct HmcConfig {
  std::size_t burn_in = 500;
  std::size_t samples = 5000;
  std::size_t thin_to = 100;
  std::size_t leapfrog_steps = 20;
  double step_size = 0.1;  // initial value; replaced by adaptation when enabled
  double target_accept = 0.8;
  bool adapt_step_size = true;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct MapConfig {
  std::size_t restarts = 10;
  std::size_t max_iters = 500;
  double grad_tol = 1e-4;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

/// Dual-averaging step-size adaptation (Nesterov-style primal-dual
/// iteration on log ε) targeting a mean acceptance probability.
class DualAveraging {
 public:
  explicit DualAveraging(double initial_step, double target_accept = 0.8);

  /// Feed one acceptance probability; returns the step size for the next iteration.
  double update(double accept_prob);

  double step_size() const;
  /// Iterate-averaged step size, frozen in after burn-in.
  double final_step_size() const;
  std::size_t iterations() const { return t_; }

 private:
  double mu_;
  double target_;
  double gamma_ = 0.05;
  double t0_ = 10.0;
  double kappa_ = 0.75;
  double h_bar_ = 0.0;
  double log_step_;
  double log_step_bar_ = 0.0;
  std::size_t t_ = 0;
};

using LogDensityFn = std::function<LogDensityValue(const Eigen::VectorXd&)>;

struct ChainResult {
  std::vector<Eigen::VectorXd> chain;  // every post-burn-in state
  std::vector<double> chain_log_density;
  std::vector<std::size_t> thinned;    // indices into chain, increasing
  double acceptance_rate = 0.0;        // post-burn-in mean acceptance probability
  double step_size = 0.0;
  double infinite_fraction = 0.0;      // post-burn-in proposals with −∞ target
  std::vector<double> energy_errors;   // |ΔH| of accepted post-burn-in trajectories
};

/// Generic HMC with identity mass matrix. Deterministic given cfg.rng_seed.
/// Throws ChainDiverged if more than 90% of post-burn-in proposals hit −∞.
ChainResult sample_hmc(const LogDensityFn& target, Eigen::VectorXd init, const HmcConfig& cfg);

struct AscentResult {
  Eigen::VectorXd argmax;
  double value = 0.0;
  double grad_norm = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // objective after every accepted step, starting point first
};

/// Gradient ascent with backtracking (halving, Armijo constant 1e-4).
AscentResult gradient_ascent(const LogDensityFn& objective, Eigen::VectorXd init,
                             std::size_t max_iters, double grad_tol);

struct SampleDiagnostics {
  std::string method;  // "hmc" | "map"
  double acceptance_rate = 0.0;
  double step_size = 0.0;
  double infinite_fraction = 0.0;
  bool map_converged = false;
  std::size_t map_iterations = 0;
};

/// Draws of Θ that prediction averages over, each with its log posterior.
struct PosteriorSampleSet {
  std::vector<HhkParams> draws;
  std::vector<double> log_posterior;
  SampleDiagnostics diagnostics;

  std::size_t size() const { return draws.size(); }
  /// Draw with the highest log posterior (first on ties).
  const HhkParams& map_draw() const;
};

PosteriorSampleSet run_hmc(const Dataset& data, const PriorSpec& spec, const TreeStructure& tree,
                           const HmcConfig& cfg);
/// Best of cfg.restarts ascents started from independent prior draws.
/// Throws AllRestartsFailed if none reaches a finite objective.
PosteriorSampleSet run_map(const Dataset& data, const PriorSpec& spec, const TreeStructure& tree,
                           const MapConfig& cfg);

/// Per-restart endpoints of run_map, in restart order, for inspection.
std::vector<AscentResult> map_restarts(const Dataset& data, const PriorSpec& spec,
                                       const TreeStructure& tree, const MapConfig& cfg);

/// Text form: a "# hhk-samples v1 leaves=J dim=d method=..." line followed by
/// a CSV with columns draw, log_posterior and one column per named parameter.
void write_samples(std::ostream& out, const PosteriorSampleSet& samples);
/// Inverse of write_samples; the tree is rebuilt as a symmetric tree.
PosteriorSampleSet read_samples(std::istream& in);

}  // namespace hhk
