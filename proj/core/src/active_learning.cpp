#include "hhk/active_learning.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "hhk/errors.hpp"
#include "hhk/predictive.hpp"

namespace hhk {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(splitmix64(base) ^ (stream * 0xd1342543de82ef95ULL + 1));
}

void check_unit(PointView x) {
  for (double v : x) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("oracle inputs must lie in the unit cube");
  }
}

}  // namespace

// ---------------------------------------------------------------------------

Oracle Oracle::analytic(std::string name, Function f, Eigen::VectorXd lower, Eigen::VectorXd upper,
                        double noise_std, std::uint64_t seed) {
  if (lower.size() == 0 || lower.size() != upper.size()) throw DimensionMismatch("oracle box bounds disagree");
  if (((upper - lower).array() <= 0.0).any()) throw DomainError("oracle box must have positive extent");
  if (!(noise_std >= 0.0)) throw DomainError("oracle noise std must be non-negative");
  Oracle o;
  o.name_ = std::move(name);
  o.f_ = std::move(f);
  o.lower_ = std::move(lower);
  o.upper_ = std::move(upper);
  o.noise_std_ = noise_std;
  o.noise_rng_.seed(seed);
  return o;
}

Oracle Oracle::pool(PointMatrix inputs, Eigen::VectorXd outputs) {
  if (inputs.rows() != outputs.size()) throw LengthMismatch("pool inputs and outputs differ in length");
  if (inputs.rows() == 0) throw EmptyPool("pool oracle needs at least one record");
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) check_unit(row_view(inputs, i));
  Oracle o;
  o.is_pool_ = true;
  o.name_ = "pool";
  o.pool_inputs_ = std::move(inputs);
  o.pool_outputs_ = std::move(outputs);
  o.remaining_.resize(static_cast<std::size_t>(o.pool_outputs_.size()));
  std::iota(o.remaining_.begin(), o.remaining_.end(), std::size_t{0});
  return o;
}

std::size_t Oracle::dim() const {
  return is_pool_ ? static_cast<std::size_t>(pool_inputs_.cols()) : static_cast<std::size_t>(lower_.size());
}

Eigen::VectorXd Oracle::to_native(PointView x) const {
  if (is_pool_) throw DomainError("pool oracles have no native box");
  if (x.size() != dim()) throw DimensionMismatch("query dimension differs from oracle");
  Eigen::VectorXd out(lower_.size());
  for (Eigen::Index m = 0; m < out.size(); ++m) out(m) = lower_(m) + x[m] * (upper_(m) - lower_(m));
  return out;
}

double Oracle::truth(PointView x) const {
  check_unit(x);
  const Eigen::VectorXd native = to_native(x);
  return f_(as_view(native));
}

double Oracle::query(PointView x) {
  const double f = truth(x);
  std::normal_distribution<double> normal(0.0, 1.0);
  return f + noise_std_ * normal(noise_rng_);
}

double Oracle::take(std::size_t record) {
  if (!is_pool_) throw DomainError("take() needs a pool oracle");
  const auto it = std::find(remaining_.begin(), remaining_.end(), record);
  if (it == remaining_.end()) {
    std::ostringstream msg;
    msg << "pool record " << record << " is not available";
    throw EmptyPool(msg.str());
  }
  remaining_.erase(it);
  return record_output(record);
}

double exp2d_function(double x1, double x2) { return x1 * std::exp(-x1 * x1 - x2 * x2); }

namespace {

// Standard deviation of f over [−2,5]² on a dense midpoint grid.
double exp2d_output_std() {
  static const double value = [] {
    constexpr int n = 1000;
    const double h = 7.0 / n;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double f = exp2d_function(-2.0 + (i + 0.5) * h, -2.0 + (j + 0.5) * h);
        s += f;
        s2 += f * f;
      }
    }
    const double m = s / (n * n);
    return std::sqrt(s2 / (n * n) - m * m);
  }();
  return value;
}

}  // namespace

Oracle exp2d_oracle(double noise_fraction, std::uint64_t seed) {
  if (!(noise_fraction >= 0.0)) throw DomainError("noise fraction must be non-negative");
  return Oracle::analytic(
      "exp2d", [](PointView x) { return exp2d_function(x[0], x[1]); }, Eigen::Vector2d(-2.0, -2.0),
      Eigen::Vector2d(5.0, 5.0), noise_fraction * exp2d_output_std(), seed);
}

Dataset analytic_test_set(const Oracle& oracle, std::size_t n, std::uint64_t seed) {
  if (oracle.is_pool()) throw DomainError("analytic_test_set needs an analytic oracle");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(oracle.dim()));
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index m = 0; m < x.cols(); ++m) x(i, m) = u(rng);
    y(i) = oracle.truth(row_view(x, i));
  }
  return Dataset(std::move(x), std::move(y));
}

// ---------------------------------------------------------------------------

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::MaxInfoGain: return "max-info-gain";
    case Strategy::Random: return "random";
    case Strategy::FixedParamsVariance: return "fixed-params-variance";
  }
  return "unknown";
}

std::string to_string(InferenceKind k) { return k == InferenceKind::Hmc ? "hmc" : "map"; }

Strategy parse_strategy(const std::string& s) {
  if (s == "max-info-gain") return Strategy::MaxInfoGain;
  if (s == "random") return Strategy::Random;
  if (s == "fixed-params-variance") return Strategy::FixedParamsVariance;
  throw ConfigError("unknown strategy '" + s + "' (expected max-info-gain, random or fixed-params-variance)");
}

InferenceKind parse_inference(const std::string& s) {
  if (s == "hmc") return InferenceKind::Hmc;
  if (s == "map") return InferenceKind::Map;
  throw ConfigError("unknown inference '" + s + "' (expected hmc or map)");
}

void ALConfig::validate() const {
  if (initial_points < 1) throw ConfigError("initial_points must be at least 1");
  if (candidates_per_step < 1) throw ConfigError("candidates_per_step must be at least 1");
}

OutputScaling OutputScaling::fit(const Eigen::VectorXd& y) {
  OutputScaling s;
  if (y.size() == 0) return s;
  s.mean = y.mean();
  const double var = (y.array() - s.mean).square().mean();
  const double sd = std::sqrt(var);
  s.scale = sd > 1e-12 * std::max(1.0, std::abs(s.mean)) ? sd : 1.0;
  return s;
}

// ---------------------------------------------------------------------------

double acquisition(const PosteriorSampleSet& samples, const Dataset& data, PointView x) {
  return mixture_entropy(mixture_at(samples, data, x));
}

Selection select_query(const PosteriorSampleSet& samples, const Dataset& data, const PointMatrix& pool,
                       Strategy strategy, std::mt19937_64& rng) {
  if (pool.rows() == 0) throw EmptyPool("candidate pool is empty");
  Selection best;
  if (strategy == Strategy::Random) {
    std::uniform_int_distribution<std::size_t> pick(0, static_cast<std::size_t>(pool.rows()) - 1);
    best.index = pick(rng);
    best.value = std::numeric_limits<double>::quiet_NaN();
    return best;
  }
  if (samples.draws.empty()) throw DomainError("selection needs posterior draws");

  PosteriorSampleSet fixed;
  const PosteriorSampleSet* used = &samples;
  if (strategy == Strategy::FixedParamsVariance) {
    fixed.draws.push_back(samples.map_draw());
    fixed.log_posterior.push_back(0.0);
    used = &fixed;
  }
  const MixturePredictor predictor(*used, data);
  best.value = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < pool.rows(); ++i) {
    const PointView x = row_view(pool, i);
    const double v = strategy == Strategy::FixedParamsVariance ? predictor.component(0, x).variance
                                                               : mixture_entropy(predictor.at(x));
    if (v > best.value) {
      best.value = v;
      best.index = static_cast<std::size_t>(i);
    }
  }
  return best;
}

double rmse(std::span<const double> predictions, std::span<const double> truths) {
  if (predictions.size() != truths.size() || predictions.empty()) {
    throw LengthMismatch("rmse needs equal, non-zero lengths");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double e = predictions[i] - truths[i];
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(predictions.size()));
}

PointMatrix latin_hypercube(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
  PointMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::size_t> perm(n);
  for (std::size_t m = 0; m < dim; ++m) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) =
          (static_cast<double>(perm[i]) + u(rng)) / static_cast<double>(n);
    }
  }
  return x;
}

std::pair<PosteriorSampleSet, OutputScaling> fit_model(const Dataset& data, const ModelConfig& model,
                                                       InferenceKind inference, std::uint64_t seed) {
  const OutputScaling scaling = OutputScaling::fit(data.outputs());
  const Dataset standardized =
      data.with_outputs(((data.outputs().array() - scaling.mean) / scaling.scale).matrix());
  const TreeStructure tree = TreeStructure::symmetric(model.leaves);
  if (inference == InferenceKind::Hmc) {
    HmcConfig cfg = model.hmc;
    cfg.rng_seed = seed;
    return {run_hmc(standardized, model.priors, tree, cfg), scaling};
  }
  MapConfig cfg = model.map;
  cfg.rng_seed = seed;
  return {run_map(standardized, model.priors, tree, cfg), scaling};
}

Eigen::VectorXd predict_means(const PosteriorSampleSet& samples, const Dataset& standardized,
                              const OutputScaling& scaling, const PointMatrix& queries) {
  const MixturePredictor predictor(samples, standardized);
  Eigen::VectorXd out(queries.rows());
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    out(i) = scaling.inverse(predictor.at(row_view(queries, i)).mean());
  }
  return out;
}

namespace {

Dataset standardize(const Dataset& data, const OutputScaling& s) {
  return data.with_outputs(((data.outputs().array() - s.mean) / s.scale).matrix());
}

double test_rmse(const ALState& state, const Dataset& test_set) {
  const Eigen::VectorXd pred =
      predict_means(state.samples, standardize(state.dataset, state.scaling), state.scaling, test_set.inputs());
  return rmse(as_view(pred), as_view(test_set.outputs()));
}

}  // namespace

ALState run_active_learning(Oracle& oracle, const ALConfig& cfg, const ModelConfig& model,
                            const Dataset& test_set, const ProgressFn& progress) {
  cfg.validate();
  if (test_set.empty()) throw LengthMismatch("test set is empty");
  if (test_set.dim() != oracle.dim()) throw DimensionMismatch("test set dimension differs from oracle");
  const std::size_t d = oracle.dim();

  std::mt19937_64 init_rng(derive_seed(cfg.rng_seed, 1));
  std::mt19937_64 candidate_rng(derive_seed(cfg.rng_seed, 2));
  std::mt19937_64 select_rng(derive_seed(cfg.rng_seed, 3));
  auto fit_seed = [&](std::size_t t) { return derive_seed(cfg.rng_seed, 1000 + t); };

  ALState state;
  state.dataset = Dataset(d);
  if (oracle.is_pool()) {
    if (oracle.remaining().size() < cfg.initial_points + cfg.iterations) {
      throw EmptyPool("pool has fewer records than initial_points + iterations");
    }
    for (std::size_t i = 0; i < cfg.initial_points; ++i) {
      const auto& rem = oracle.remaining();
      std::uniform_int_distribution<std::size_t> pick(0, rem.size() - 1);
      const std::size_t record = rem[pick(init_rng)];
      const double y = oracle.take(record);
      state.dataset = state.dataset.with_point(oracle.record_input(record), y);
    }
  } else {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::VectorXd x(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < cfg.initial_points; ++i) {
      for (Eigen::Index m = 0; m < x.size(); ++m) x(m) = u(init_rng);
      state.dataset = state.dataset.with_point(as_view(x), oracle.query(as_view(x)));
    }
  }
  state.initial_size = state.dataset.size();

  std::tie(state.samples, state.scaling) = fit_model(state.dataset, model, cfg.inference, fit_seed(0));
  state.initial_rmse = test_rmse(state, test_set);

  for (std::size_t t = 1; t <= cfg.iterations; ++t) {
    const auto start = std::chrono::steady_clock::now();
    const Dataset before = state.dataset;
    const PosteriorSampleSet samples_before = state.samples;
    const OutputScaling scaling_before = state.scaling;
    try {
      PointMatrix candidates;
      std::vector<std::size_t> records;
      if (oracle.is_pool()) {
        records = oracle.remaining();
        if (records.size() > cfg.candidates_per_step) {
          std::shuffle(records.begin(), records.end(), candidate_rng);
          records.resize(cfg.candidates_per_step);
          std::sort(records.begin(), records.end());
        }
        candidates.resize(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(d));
        for (std::size_t i = 0; i < records.size(); ++i) {
          const PointView r = oracle.record_input(records[i]);
          for (std::size_t m = 0; m < d; ++m) candidates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) = r[m];
        }
      } else {
        candidates = latin_hypercube(cfg.candidates_per_step, d, candidate_rng);
      }

      const Selection sel = select_query(state.samples, standardize(state.dataset, state.scaling), candidates,
                                         cfg.strategy, select_rng);
      ALRecord rec;
      rec.iteration = t;
      rec.x = Eigen::Map<const Eigen::VectorXd>(candidates.row(static_cast<Eigen::Index>(sel.index)).data(),
                                                static_cast<Eigen::Index>(d));
      rec.acquisition = sel.value;
      if (oracle.is_pool()) {
        rec.pool_record = records[sel.index];
        rec.y = oracle.take(records[sel.index]);
      } else {
        rec.y = oracle.query(as_view(rec.x));
      }
      state.dataset = state.dataset.with_point(as_view(rec.x), rec.y);
      std::tie(state.samples, state.scaling) = fit_model(state.dataset, model, cfg.inference, fit_seed(t));
      rec.rmse = test_rmse(state, test_set);
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      state.history.push_back(rec);
      if (progress) progress(rec);
    } catch (const Error& e) {
      state.dataset = before;
      state.samples = samples_before;
      state.scaling = scaling_before;
      std::ostringstream msg;
      msg << "iteration " << t << ": " << e.what();
      state.aborted = msg.str();
      break;
    }
  }
  return state;
}

}  // namespace hhk
