#include "hhk/inference.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

#include "hhk/errors.hpp"
#include "hhk/io.hpp"

namespace hhk {

void HmcConfig::validate() const {
  if (burn_in == 0 && adapt_step_size) {
    // adaptation simply never runs; allowed
  }
  if (samples < 1 || thin_to < 1 || leapfrog_steps < 1) throw ConfigError("HMC counts must be at least 1");
  if (thin_to > samples) throw ConfigError("thin_to must not exceed samples");
  if (!(step_size > 0.0) || !std::isfinite(step_size)) throw ConfigError("HMC step size must be positive");
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw ConfigError("target_accept must lie in (0, 1)");
}

void MapConfig::validate() const {
  if (restarts < 1) throw ConfigError("MAP restarts must be at least 1");
  if (max_iters < 1) throw ConfigError("MAP max_iters must be at least 1");
  if (!(grad_tol > 0.0)) throw ConfigError("MAP grad_tol must be positive");
}

// ---------------------------------------------------------------------------

DualAveraging::DualAveraging(double initial_step, double target_accept)
    : mu_(std::log(10.0 * initial_step)), target_(target_accept), log_step_(std::log(initial_step)) {}

double DualAveraging::update(double accept_prob) {
  ++t_;
  const double t = static_cast<double>(t_);
  const double eta = 1.0 / (t + t0_);
  h_bar_ = (1.0 - eta) * h_bar_ + eta * (target_ - accept_prob);
  log_step_ = mu_ - std::sqrt(t) / gamma_ * h_bar_;
  const double w = std::pow(t, -kappa_);
  log_step_bar_ = w * log_step_ + (1.0 - w) * log_step_bar_;
  return std::exp(log_step_);
}

double DualAveraging::step_size() const { return std::exp(log_step_); }

double DualAveraging::final_step_size() const { return t_ == 0 ? step_size() : std::exp(log_step_bar_); }

// ---------------------------------------------------------------------------

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct State {
  Eigen::VectorXd q;
  LogDensityValue density;
};

struct Trajectory {
  State end;
  Eigen::VectorXd p;
  bool infinite = false;
};

Trajectory leapfrog(const LogDensityFn& target, const State& start, Eigen::VectorXd p, double eps, std::size_t steps) {
  Trajectory tr{start, std::move(p), false};
  tr.p += 0.5 * eps * tr.end.density.gradient;
  for (std::size_t s = 0; s < steps; ++s) {
    tr.end.q += eps * tr.p;
    tr.end.density = target(tr.end.q);
    if (!std::isfinite(tr.end.density.value)) {
      tr.infinite = true;
      return tr;
    }
    const double scale = (s + 1 == steps) ? 0.5 : 1.0;
    tr.p += scale * eps * tr.end.density.gradient;
  }
  return tr;
}

double hamiltonian(const State& s, const Eigen::VectorXd& p) { return -s.density.value + 0.5 * p.squaredNorm(); }

double accept_probability(const State& start, const Eigen::VectorXd& p0, const Trajectory& tr) {
  if (tr.infinite) return 0.0;
  const double dh = hamiltonian(tr.end, tr.p) - hamiltonian(start, p0);
  if (!std::isfinite(dh)) return 0.0;
  return dh <= 0.0 ? 1.0 : std::exp(-dh);
}

Eigen::VectorXd draw_momentum(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd p(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = normal(rng);
  return p;
}

// Doubles or halves ε until a single leapfrog step crosses acceptance ½.
double reasonable_step(const LogDensityFn& target, const State& s, double eps, std::mt19937_64& rng) {
  Eigen::VectorXd p = draw_momentum(static_cast<std::size_t>(s.q.size()), rng);
  double acc = accept_probability(s, p, leapfrog(target, s, p, eps, 1));
  const double dir = acc > 0.5 ? 1.0 : -1.0;
  for (int k = 0; k < 60; ++k) {
    if (dir > 0 ? !(acc > 0.5) : !(acc < 0.5)) break;
    const double next = eps * std::pow(2.0, dir);
    if (next < 1e-12 || next > 1e3) break;
    eps = next;
    acc = accept_probability(s, p, leapfrog(target, s, p, eps, 1));
  }
  return dir > 0 ? eps / 2.0 : eps;
}

std::mt19937_64 seeded(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

ChainResult sample_hmc(const LogDensityFn& target, Eigen::VectorXd init, const HmcConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng = seeded(cfg.rng_seed, 0x484d43);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  State current{std::move(init), {}};
  current.density = target(current.q);
  if (!std::isfinite(current.density.value)) throw ChainDiverged("HMC initial point has zero density");

  double eps = cfg.step_size;
  std::optional<DualAveraging> adapt;
  if (cfg.adapt_step_size && cfg.burn_in > 0) {
    eps = reasonable_step(target, current, eps, rng);
    adapt.emplace(eps, cfg.target_accept);
  }

  ChainResult out;
  out.chain.reserve(cfg.samples);
  out.chain_log_density.reserve(cfg.samples);
  double accept_sum = 0.0;
  std::size_t infinite = 0;
  const std::size_t n = static_cast<std::size_t>(current.q.size());

  for (std::size_t it = 0; it < cfg.burn_in + cfg.samples; ++it) {
    const Eigen::VectorXd p0 = draw_momentum(n, rng);
    Trajectory tr = leapfrog(target, current, p0, eps, cfg.leapfrog_steps);
    const double acc = accept_probability(current, p0, tr);
    const double dh = tr.infinite ? 0.0 : std::abs(hamiltonian(tr.end, tr.p) - hamiltonian(current, p0));
    const bool accepted = uniform(rng) < acc;
    if (accepted) current = std::move(tr.end);

    if (it < cfg.burn_in) {
      if (adapt) {
        eps = adapt->update(acc);
        if (it + 1 == cfg.burn_in) eps = adapt->final_step_size();
      }
      continue;
    }
    accept_sum += acc;
    if (tr.infinite) ++infinite;
    if (accepted) out.energy_errors.push_back(dh);
    out.chain.push_back(current.q);
    out.chain_log_density.push_back(current.density.value);
  }

  out.acceptance_rate = accept_sum / static_cast<double>(cfg.samples);
  out.infinite_fraction = static_cast<double>(infinite) / static_cast<double>(cfg.samples);
  out.step_size = eps;
  if (out.infinite_fraction > 0.9) {
    std::ostringstream msg;
    msg << "HMC diverged: " << out.infinite_fraction * 100.0 << "% of proposals hit zero density";
    throw ChainDiverged(msg.str());
  }
  const std::size_t stride = cfg.samples / cfg.thin_to;
  for (std::size_t k = 0; k < cfg.thin_to; ++k) out.thinned.push_back((k + 1) * stride - 1);
  return out;
}

AscentResult gradient_ascent(const LogDensityFn& objective, Eigen::VectorXd init, std::size_t max_iters,
                             double grad_tol) {
  constexpr double kArmijo = 1e-4;
  AscentResult r;
  r.argmax = std::move(init);
  LogDensityValue cur = objective(r.argmax);
  r.value = cur.value;
  if (!std::isfinite(cur.value)) {
    r.value = kNegInf;
    return r;
  }
  r.trace.push_back(cur.value);
  double t = 1.0;
  for (r.iterations = 0; r.iterations < max_iters; ++r.iterations) {
    r.grad_norm = cur.gradient.norm();
    if (r.grad_norm < grad_tol) {
      r.converged = true;
      break;
    }
    const double g2 = cur.gradient.squaredNorm();
    bool stepped = false;
    Eigen::VectorXd cand;
    LogDensityValue next;
    while (t > 1e-20) {
      cand = r.argmax + t * cur.gradient;
      next = objective(cand);
      if (std::isfinite(next.value) && next.value >= cur.value + kArmijo * t * g2) {
        stepped = true;
        break;
      }
      t *= 0.5;
    }
    if (!stepped) break;
    // Barzilai-Borwein trial step for the next iteration; backtracking keeps it safe.
    const Eigen::VectorXd s = cand - r.argmax;
    const double sy = -s.dot(next.gradient - cur.gradient);
    const double bb = sy > 0.0 ? s.squaredNorm() / sy : 2.0 * t;
    t = std::clamp(bb, 1e-10, 1e10);
    r.argmax = std::move(cand);
    cur = std::move(next);
    r.trace.push_back(cur.value);
  }
  r.value = cur.value;
  r.grad_norm = cur.gradient.norm();
  if (r.grad_norm < grad_tol) r.converged = true;
  return r;
}

// ---------------------------------------------------------------------------

const HhkParams& PosteriorSampleSet::map_draw() const {
  if (draws.empty()) throw DomainError("empty posterior sample set");
  std::size_t best = 0;
  for (std::size_t i = 1; i < draws.size(); ++i) {
    if (log_posterior[i] > log_posterior[best]) best = i;
  }
  return draws[best];
}

namespace {

// Σ u_k over positive entries: the log-Jacobian included in the HMC target.
double log_jacobian(const ParameterLayout& layout, const Eigen::VectorXd& u) {
  double s = 0.0;
  for (std::size_t k = 0; k < layout.size(); ++k) {
    if (layout.is_positive(k)) s += u(static_cast<Eigen::Index>(k));
  }
  return s;
}

Eigen::VectorXd initial_point(const ParameterLayout& layout, const LogDensityFn& target, const PriorSpec& spec,
                              std::mt19937_64& rng) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    Eigen::VectorXd u = to_unconstrained(layout, sample_prior(layout, spec, rng));
    if (std::isfinite(target(u).value)) return u;
  }
  throw ChainDiverged("no prior draw with finite posterior density after 100 attempts");
}

void check_inputs(const Dataset& data, const TreeStructure& tree, const PriorSpec& spec) {
  spec.validate();
  if (data.dim() == 0) throw DimensionMismatch("dataset has no input dimension");
  (void)tree;
}

}  // namespace

PosteriorSampleSet run_hmc(const Dataset& data, const PriorSpec& spec, const TreeStructure& tree,
                           const HmcConfig& cfg) {
  check_inputs(data, tree, spec);
  cfg.validate();
  const ParameterLayout layout(tree, data.dim());
  const LogDensityFn target = [&](const Eigen::VectorXd& u) {
    return log_posterior_unconstrained(layout, u, data, spec);
  };
  std::mt19937_64 init_rng = seeded(cfg.rng_seed, 0x696e6974);
  const ChainResult chain = sample_hmc(target, initial_point(layout, target, spec, init_rng), cfg);

  PosteriorSampleSet out;
  for (std::size_t idx : chain.thinned) {
    const Eigen::VectorXd& u = chain.chain[idx];
    out.draws.push_back(from_unconstrained(layout, u));
    out.log_posterior.push_back(chain.chain_log_density[idx] - log_jacobian(layout, u));
  }
  out.diagnostics.method = "hmc";
  out.diagnostics.acceptance_rate = chain.acceptance_rate;
  out.diagnostics.step_size = chain.step_size;
  out.diagnostics.infinite_fraction = chain.infinite_fraction;
  return out;
}

std::vector<AscentResult> map_restarts(const Dataset& data, const PriorSpec& spec, const TreeStructure& tree,
                                       const MapConfig& cfg) {
  check_inputs(data, tree, spec);
  cfg.validate();
  const ParameterLayout layout(tree, data.dim());
  // Constrained-space posterior mode: drop the log-Jacobian from the HMC target.
  const LogDensityFn objective = [&](const Eigen::VectorXd& u) {
    LogDensityValue v = log_posterior_unconstrained(layout, u, data, spec);
    if (!std::isfinite(v.value)) return v;
    v.value -= log_jacobian(layout, u);
    for (std::size_t k = 0; k < layout.size(); ++k) {
      if (layout.is_positive(k)) v.gradient(static_cast<Eigen::Index>(k)) -= 1.0;
    }
    return v;
  };
  std::vector<AscentResult> results;
  results.reserve(cfg.restarts);
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    std::mt19937_64 rng = seeded(cfg.rng_seed, 0x6d6170000000ULL + r);
    Eigen::VectorXd init;
    try {
      init = initial_point(layout, objective, spec, rng);
    } catch (const ChainDiverged&) {
      AscentResult failed;
      failed.value = kNegInf;
      results.push_back(std::move(failed));
      continue;
    }
    results.push_back(gradient_ascent(objective, std::move(init), cfg.max_iters, cfg.grad_tol));
  }
  return results;
}

PosteriorSampleSet run_map(const Dataset& data, const PriorSpec& spec, const TreeStructure& tree,
                           const MapConfig& cfg) {
  const std::vector<AscentResult> results = map_restarts(data, spec, tree, cfg);
  std::size_t best = results.size();
  for (std::size_t r = 0; r < results.size(); ++r) {
    if (!std::isfinite(results[r].value)) continue;
    if (best == results.size() || results[r].value > results[best].value) best = r;
  }
  if (best == results.size()) throw AllRestartsFailed("every MAP restart ended with a non-finite objective");
  const ParameterLayout layout(tree, data.dim());
  PosteriorSampleSet out;
  out.draws.push_back(from_unconstrained(layout, results[best].argmax));
  out.log_posterior.push_back(results[best].value);
  out.diagnostics.method = "map";
  out.diagnostics.map_converged = results[best].converged;
  out.diagnostics.map_iterations = results[best].iterations;
  return out;
}

// ---------------------------------------------------------------------------

void write_samples(std::ostream& out, const PosteriorSampleSet& samples) {
  if (samples.draws.empty()) throw DomainError("cannot write an empty sample set");
  const HhkParams& first = samples.draws.front();
  const ParameterLayout layout(first.tree, first.dim());
  out << "# hhk-samples v1 leaves=" << first.leaves() << " dim=" << first.dim()
      << " method=" << (samples.diagnostics.method.empty() ? "unknown" : samples.diagnostics.method)
      << " acceptance=" << format_double(samples.diagnostics.acceptance_rate)
      << " step_size=" << format_double(samples.diagnostics.step_size) << "\n";
  out << "draw,log_posterior";
  for (const auto& name : layout.names()) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < samples.draws.size(); ++i) {
    const Eigen::VectorXd flat = layout.flatten(samples.draws[i]);
    out << i << ',' << format_double(samples.log_posterior[i]);
    for (Eigen::Index k = 0; k < flat.size(); ++k) out << ',' << format_double(flat(k));
    out << '\n';
  }
}

PosteriorSampleSet read_samples(std::istream& in) {
  std::string first;
  if (!std::getline(in, first) || first.rfind("# hhk-samples v1", 0) != 0) {
    throw ParseError("sample file must start with '# hhk-samples v1'");
  }
  std::map<std::string, std::string> meta;
  std::istringstream tokens(first.substr(16));
  for (std::string tok; tokens >> tok;) {
    const auto eq = tok.find('=');
    if (eq != std::string::npos) meta[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  if (!meta.count("leaves") || !meta.count("dim")) throw ParseError("sample header lacks leaves= or dim=");
  const std::size_t leaves = std::stoul(meta["leaves"]);
  const std::size_t dim = std::stoul(meta["dim"]);
  const ParameterLayout layout(TreeStructure::symmetric(leaves), dim);

  const CsvTable table = read_numeric_csv(in);
  const auto names = layout.names();
  if (table.header.size() != names.size() + 2) throw ParseError("sample file has the wrong number of columns");
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (table.header[k + 2] != names[k]) throw ParseError("unexpected sample column '" + table.header[k + 2] + "'");
  }
  PosteriorSampleSet out;
  out.diagnostics.method = meta.count("method") ? meta["method"] : "unknown";
  if (meta.count("acceptance")) out.diagnostics.acceptance_rate = std::stod(meta["acceptance"]);
  if (meta.count("step_size")) out.diagnostics.step_size = std::stod(meta["step_size"]);
  for (const auto& row : table.rows) {
    Eigen::VectorXd flat(static_cast<Eigen::Index>(names.size()));
    for (std::size_t k = 0; k < names.size(); ++k) flat(static_cast<Eigen::Index>(k)) = row[k + 2];
    HhkParams p = layout.unflatten(flat);
    p.validate();
    out.draws.push_back(std::move(p));
    out.log_posterior.push_back(row[1]);
  }
  if (out.draws.empty()) throw ParseError("sample file has no draws");
  return out;
}

}  // namespace hhk
