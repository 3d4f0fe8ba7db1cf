#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hhk/dataset.hpp"
#include "hhk/inference.hpp"
#include "hhk/priors.hpp"
#include "hhk/types.hpp"

namespace hhk {

/// Ground truth queried by the loop. Inputs are always given in the unit
/// cube; an analytic oracle maps them affinely onto its native box.
class Oracle {
 public:
  using Function = std::function<double(PointView)>;

  static Oracle analytic(std::string name, Function f, Eigen::VectorXd lower, Eigen::VectorXd upper,
                         double noise_std, std::uint64_t seed);
  /// Finite set of records; inputs must lie in [0,1]^d.
  static Oracle pool(PointMatrix inputs, Eigen::VectorXd outputs);

  bool is_pool() const { return is_pool_; }
  std::size_t dim() const;
  const std::string& name() const { return name_; }
  double noise_std() const { return noise_std_; }

  /// Analytic: noisy observation at a unit-cube point.
  double query(PointView x);
  /// Analytic: noiseless value at a unit-cube point.
  double truth(PointView x) const;
  Eigen::VectorXd to_native(PointView x) const;

  /// Pool: returns the record's output and removes it. Throws EmptyPool if
  /// the record was already taken.
  double take(std::size_t record);
  const std::vector<std::size_t>& remaining() const { return remaining_; }
  PointView record_input(std::size_t record) const { return row_view(pool_inputs_, static_cast<Eigen::Index>(record)); }
  double record_output(std::size_t record) const { return pool_outputs_(static_cast<Eigen::Index>(record)); }

 private:
  Oracle() = default;

  bool is_pool_ = false;
  std::string name_;
  Function f_;
  Eigen::VectorXd lower_, upper_;
  double noise_std_ = 0.0;
  std::mt19937_64 noise_rng_;
  PointMatrix pool_inputs_;
  Eigen::VectorXd pool_outputs_;
  std::vector<std::size_t> remaining_;
};

/// x₁ exp(−x₁² − x₂²) on its native coordinates.
double exp2d_function(double x1, double x2);
/// Exponential 2-D oracle on [−2,5]²; noise std = noise_fraction × the
/// function's standard deviation over the box.
Oracle exp2d_oracle(double noise_fraction = 0.01, std::uint64_t seed = 0);
/// Held-out test set: uniform unit-cube inputs with noiseless outputs.
Dataset analytic_test_set(const Oracle& oracle, std::size_t n, std::uint64_t seed);

enum class Strategy { MaxInfoGain, Random, FixedParamsVariance };
enum class InferenceKind { Hmc, Map };

std::string to_string(Strategy s);
std::string to_string(InferenceKind k);
Strategy parse_strategy(const std::string& s);
InferenceKind parse_inference(const std::string& s);

struct ALConfig {
  std::size_t initial_points = 5;
  std::size_t iterations = 60;
  std::size_t candidates_per_step = 512;
  Strategy strategy = Strategy::MaxInfoGain;
  InferenceKind inference = InferenceKind::Hmc;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct ModelConfig {
  std::size_t leaves = 8;
  PriorSpec priors;
  HmcConfig hmc;
  MapConfig map;
};

/// Affine output standardization; RMSE is always reported in raw units.
struct OutputScaling {
  double mean = 0.0;
  double scale = 1.0;

  static OutputScaling fit(const Eigen::VectorXd& y);
  double forward(double y) const { return (y - mean) / scale; }
  double inverse(double z) const { return z * scale + mean; }
};

struct ALRecord {
  std::size_t iteration = 0;  // 1-based
  Eigen::VectorXd x;          // unit cube
  double y = 0.0;             // raw units
  double acquisition = 0.0;
  double rmse = 0.0;          // after incorporating (x, y)
  double seconds = 0.0;
  std::optional<std::size_t> pool_record;
};

struct ALState {
  Dataset dataset;  // unit-cube inputs, raw outputs
  std::size_t initial_size = 0;
  double initial_rmse = 0.0;
  std::vector<ALRecord> history;
  PosteriorSampleSet samples;  // posterior of the last fit
  OutputScaling scaling;       // standardization used by the last fit
  std::string aborted;         // error message if the loop stopped early
};

/// Entropy of the marginal predictive mixture at x; larger is more informative.
double acquisition(const PosteriorSampleSet& samples, const Dataset& data, PointView x);

struct Selection {
  std::size_t index = 0;  // row in the candidate pool
  double value = 0.0;     // acquisition (NaN for Random)
};

/// Max-info-gain and fixed-params-variance return the argmax over the pool
/// (lowest index on ties); Random draws uniformly with `rng`.
Selection select_query(const PosteriorSampleSet& samples, const Dataset& data, const PointMatrix& pool,
                       Strategy strategy, std::mt19937_64& rng);

/// √(mean of squared errors). Throws LengthMismatch for unequal or empty inputs.
double rmse(std::span<const double> predictions, std::span<const double> truths);

/// Stratified sample: each dimension split into n strata, one point per stratum.
PointMatrix latin_hypercube(std::size_t n, std::size_t dim, std::mt19937_64& rng);

/// Fit the model to `data` (raw outputs) and return the posterior draws plus
/// the output scaling applied.
std::pair<PosteriorSampleSet, OutputScaling> fit_model(const Dataset& data, const ModelConfig& model,
                                                       InferenceKind inference, std::uint64_t seed);

/// Mixture-mean predictions in raw output units.
Eigen::VectorXd predict_means(const PosteriorSampleSet& samples, const Dataset& standardized,
                              const OutputScaling& scaling, const PointMatrix& queries);

using ProgressFn = std::function<void(const ALRecord&)>;

/// The sequential query loop: iterations+1 fits, one query per iteration.
ALState run_active_learning(Oracle& oracle, const ALConfig& cfg, const ModelConfig& model,
                            const Dataset& test_set, const ProgressFn& progress = {});

}  // namespace hhk
