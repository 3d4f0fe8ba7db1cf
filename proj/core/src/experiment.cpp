#include "hhk/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "hhk/errors.hpp"
#include "hhk/io.hpp"

namespace hhk {

using nlohmann::json;

namespace {

bool is_power_of_two(std::size_t n) { return n >= 1 && (n & (n - 1)) == 0; }

std::string task_name(TaskKind t) { return t == TaskKind::Exp2d ? "exp2d" : "csv-pool"; }

void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw ConfigError("'" + where + "' must be a JSON object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.count(k)) throw ConfigError("unknown key '" + (where.empty() ? k : where + "." + k) + "'");
  }
}

template <typename T>
void read(const json& obj, const std::string& where, const char* key, T& out) {
  if (!obj.contains(key)) return;
  const std::string path = where.empty() ? key : where + "." + key;
  const json& v = obj.at(key);
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.template get<long long>() >= 0)) throw ConfigError("");
    } else {
      if (!v.is_number()) throw ConfigError("");
    }
    out = v.template get<T>();
  } catch (const std::exception&) {
    throw ConfigError("key '" + path + "' has the wrong type");
  }
}

PriorDist parse_prior(const json& obj, const std::string& where) {
  reject_unknown(obj, where, {"family", "shape", "rate", "mean", "sd"});
  std::string family;
  read(obj, where, "family", family);
  if (family == "gamma") {
    PriorDist d = PriorDist::gamma(2.0, 1.0);
    read(obj, where, "shape", d.a);
    read(obj, where, "rate", d.b);
    return d;
  }
  if (family == "normal") {
    PriorDist d = PriorDist::normal(0.0, 1.0);
    read(obj, where, "mean", d.a);
    read(obj, where, "sd", d.b);
    return d;
  }
  if (family == "exponential") {
    PriorDist d = PriorDist::exponential(1.0);
    read(obj, where, "rate", d.a);
    return d;
  }
  throw ConfigError("key '" + where + ".family' must be gamma, normal or exponential");
}

json prior_json(const PriorDist& d) {
  switch (d.family) {
    case PriorFamily::Gamma: return {{"family", "gamma"}, {"shape", d.a}, {"rate", d.b}};
    case PriorFamily::Normal: return {{"family", "normal"}, {"mean", d.a}, {"sd", d.b}};
    case PriorFamily::Exponential: return {{"family", "exponential"}, {"rate", d.a}};
  }
  return {};
}

json config_json(const RunConfig& c) {
  json j;
  j["task"] = task_name(c.task);
  j["csv_path"] = c.csv_path;
  j["test_fraction"] = c.test_fraction;
  j["test_points"] = c.test_points;
  j["noise_fraction"] = c.noise_fraction;
  j["replications"] = c.replications;
  j["base_seed"] = c.base_seed;
  j["output_dir"] = c.output_dir;
  j["record_timing"] = c.record_timing;
  j["model"] = {
      {"leaves", c.model.leaves},
      {"priors",
       {{"lengthscale", prior_json(c.model.priors.lengthscale)},
        {"variance", prior_json(c.model.priors.variance)},
        {"relevance", prior_json(c.model.priors.relevance)},
        {"direction", prior_json(c.model.priors.direction)},
        {"noise", prior_json(c.model.priors.noise)}}},
      {"hmc",
       {{"burn_in", c.model.hmc.burn_in},
        {"samples", c.model.hmc.samples},
        {"thin_to", c.model.hmc.thin_to},
        {"leapfrog_steps", c.model.hmc.leapfrog_steps},
        {"step_size", c.model.hmc.step_size},
        {"target_accept", c.model.hmc.target_accept},
        {"adapt_step_size", c.model.hmc.adapt_step_size}}},
      {"map",
       {{"restarts", c.model.map.restarts}, {"max_iters", c.model.map.max_iters}, {"grad_tol", c.model.map.grad_tol}}}};
  j["al"] = {{"initial_points", c.al.initial_points},
             {"iterations", c.al.iterations},
             {"candidates_per_step", c.al.candidates_per_step},
             {"strategy", to_string(c.al.strategy)},
             {"inference", to_string(c.al.inference)}};
  return j;
}

}  // namespace

void RunConfig::validate() const {
  if (!is_power_of_two(model.leaves)) throw ConfigError("model.leaves must be a power of two >= 1");
  if (replications < 1) throw ConfigError("replications must be at least 1");
  if (task == TaskKind::CsvPool) {
    if (csv_path.empty()) throw ConfigError("csv_path is required for task csv-pool");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
  } else {
    if (test_points < 1) throw ConfigError("test_points must be at least 1");
    if (!(noise_fraction >= 0.0) || !std::isfinite(noise_fraction)) throw ConfigError("noise_fraction must be >= 0");
  }
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  model.priors.validate();
  model.hmc.validate();
  model.map.validate();
  al.validate();
}

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  reject_unknown(root, "", {"task", "csv_path", "test_fraction", "test_points", "noise_fraction", "model", "al",
                            "replications", "base_seed", "output_dir", "record_timing"});
  RunConfig c;
  std::string task = task_name(c.task);
  read(root, "", "task", task);
  if (task == "exp2d") {
    c.task = TaskKind::Exp2d;
  } else if (task == "csv-pool") {
    c.task = TaskKind::CsvPool;
  } else {
    throw ConfigError("key 'task' must be exp2d or csv-pool");
  }
  read(root, "", "csv_path", c.csv_path);
  read(root, "", "test_fraction", c.test_fraction);
  read(root, "", "test_points", c.test_points);
  read(root, "", "noise_fraction", c.noise_fraction);
  read(root, "", "replications", c.replications);
  read(root, "", "base_seed", c.base_seed);
  read(root, "", "output_dir", c.output_dir);
  read(root, "", "record_timing", c.record_timing);

  if (root.contains("model")) {
    const json& m = root["model"];
    reject_unknown(m, "model", {"leaves", "priors", "hmc", "map"});
    read(m, "model", "leaves", c.model.leaves);
    if (m.contains("priors")) {
      const json& p = m["priors"];
      reject_unknown(p, "model.priors", {"lengthscale", "variance", "relevance", "direction", "noise"});
      if (p.contains("lengthscale")) c.model.priors.lengthscale = parse_prior(p["lengthscale"], "model.priors.lengthscale");
      if (p.contains("variance")) c.model.priors.variance = parse_prior(p["variance"], "model.priors.variance");
      if (p.contains("relevance")) c.model.priors.relevance = parse_prior(p["relevance"], "model.priors.relevance");
      if (p.contains("direction")) c.model.priors.direction = parse_prior(p["direction"], "model.priors.direction");
      if (p.contains("noise")) c.model.priors.noise = parse_prior(p["noise"], "model.priors.noise");
    }
    if (m.contains("hmc")) {
      const json& h = m["hmc"];
      reject_unknown(h, "model.hmc",
                     {"burn_in", "samples", "thin_to", "leapfrog_steps", "step_size", "target_accept", "adapt_step_size"});
      read(h, "model.hmc", "burn_in", c.model.hmc.burn_in);
      read(h, "model.hmc", "samples", c.model.hmc.samples);
      read(h, "model.hmc", "thin_to", c.model.hmc.thin_to);
      read(h, "model.hmc", "leapfrog_steps", c.model.hmc.leapfrog_steps);
      read(h, "model.hmc", "step_size", c.model.hmc.step_size);
      read(h, "model.hmc", "target_accept", c.model.hmc.target_accept);
      read(h, "model.hmc", "adapt_step_size", c.model.hmc.adapt_step_size);
    }
    if (m.contains("map")) {
      const json& p = m["map"];
      reject_unknown(p, "model.map", {"restarts", "max_iters", "grad_tol"});
      read(p, "model.map", "restarts", c.model.map.restarts);
      read(p, "model.map", "max_iters", c.model.map.max_iters);
      read(p, "model.map", "grad_tol", c.model.map.grad_tol);
    }
  }
  if (root.contains("al")) {
    const json& a = root["al"];
    reject_unknown(a, "al", {"initial_points", "iterations", "candidates_per_step", "strategy", "inference"});
    read(a, "al", "initial_points", c.al.initial_points);
    read(a, "al", "iterations", c.al.iterations);
    read(a, "al", "candidates_per_step", c.al.candidates_per_step);
    std::string s = to_string(c.al.strategy);
    read(a, "al", "strategy", s);
    c.al.strategy = parse_strategy(s);
    std::string inf = to_string(c.al.inference);
    read(a, "al", "inference", inf);
    c.al.inference = parse_inference(inf);
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

std::string run_config_to_json(const RunConfig& cfg) { return config_json(cfg).dump(2); }

// ---------------------------------------------------------------------------

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw LengthMismatch("quantile of an empty set");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<AggregateRow> aggregate_curves(const std::vector<std::vector<double>>& curves) {
  if (curves.empty()) return {};
  std::size_t len = curves.front().size();
  for (const auto& c : curves) len = std::min(len, c.size());
  std::vector<AggregateRow> out;
  for (std::size_t t = 0; t < len; ++t) {
    std::vector<double> col;
    for (const auto& c : curves) col.push_back(c[t]);
    out.push_back({t, quantile(col, 0.5), quantile(col, 0.25), quantile(col, 0.75)});
  }
  return out;
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::size_t worker_threads() {
  if (const char* env = std::getenv("HHK_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

std::string rep_prefix(std::size_t r) {
  std::ostringstream s;
  s << "rep_" << std::setw(3) << std::setfill('0') << r << '_';
  return s.str();
}

void write_history(const std::filesystem::path& path, const ALState& state, bool timing) {
  std::ofstream out(path);
  const std::size_t d = state.dataset.dim();
  out << "iteration";
  for (std::size_t m = 0; m < d; ++m) out << ",x" << m;
  out << ",y,acquisition,rmse,seconds\n";
  for (const ALRecord& r : state.history) {
    out << r.iteration;
    for (Eigen::Index m = 0; m < r.x.size(); ++m) out << ',' << format_double(r.x(m));
    out << ',' << format_double(r.y) << ',' << format_double(r.acquisition) << ',' << format_double(r.rmse) << ','
        << format_double(timing ? r.seconds : 0.0) << '\n';
  }
}

void write_data(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  for (std::size_t m = 0; m < data.dim(); ++m) out << 'x' << m << ',';
  out << "y\n";
  for (std::size_t t = 0; t < data.size(); ++t) {
    for (double v : data.input(t)) out << format_double(v) << ',';
    out << format_double(data.outputs()(static_cast<Eigen::Index>(t))) << '\n';
  }
}

std::uint64_t task_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::mt19937_64 rng(seq);
  return rng();
}

ReplicationResult run_replication(const RunConfig& cfg, std::size_t r, const PoolData* pool_data) {
  ReplicationResult res;
  res.replication = r;
  res.seed = cfg.base_seed + r;
  ALConfig al = cfg.al;
  al.rng_seed = res.seed;

  if (cfg.task == TaskKind::Exp2d) {
    Oracle oracle = exp2d_oracle(cfg.noise_fraction, task_seed(res.seed, 1));
    const Dataset test = analytic_test_set(oracle, cfg.test_points, task_seed(res.seed, 2));
    res.state = run_active_learning(oracle, al, cfg.model, test);
  } else {
    // Raw output units throughout, so RMSE is reported in the file's units.
    const Dataset& all = pool_data->pool;
    const auto n = all.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(task_seed(res.seed, 3));
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::ceil(cfg.test_fraction * static_cast<double>(n)));
    if (n_test < 1 || n_test >= n) throw ConfigError("test_fraction leaves an empty pool or test set");
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::sort(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
    auto subset = [&](std::size_t begin, std::size_t end) {
      PointMatrix x(static_cast<Eigen::Index>(end - begin), static_cast<Eigen::Index>(all.dim()));
      Eigen::VectorXd y(x.rows());
      for (std::size_t i = begin; i < end; ++i) {
        const auto row = static_cast<Eigen::Index>(i - begin);
        const auto src = static_cast<Eigen::Index>(order[i]);
        x.row(row) = all.inputs().row(src);
        y(row) = pool_data->norm.destandardize_output(all.outputs()(src));
      }
      return std::pair{x, y};
    };
    auto [tx, ty] = subset(0, n_test);
    auto [px, py] = subset(n_test, n);
    const Dataset test(std::move(tx), std::move(ty));
    Oracle oracle = Oracle::pool(std::move(px), std::move(py));
    res.state = run_active_learning(oracle, al, cfg.model, test);
  }
  res.rmse_curve.push_back(res.state.initial_rmse);
  for (const ALRecord& rec : res.state.history) res.rmse_curve.push_back(rec.rmse);

  const std::filesystem::path dir(cfg.output_dir);
  const std::string prefix = rep_prefix(r);
  write_history(dir / (prefix + "history.csv"), res.state, cfg.record_timing);
  write_data(dir / (prefix + "data.csv"), res.state.dataset);
  std::ofstream samples(dir / (prefix + "samples.csv"));
  write_samples(samples, res.state.samples);
  return res;
}

}  // namespace

std::vector<ReplicationResult> run_experiment(const RunConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.output_dir);

  std::optional<PoolData> pool_data;
  if (cfg.task == TaskKind::CsvPool) pool_data = load_pool_csv(std::filesystem::path(cfg.csv_path));

  std::vector<ReplicationResult> results(cfg.replications);
  std::vector<std::exception_ptr> errors(cfg.replications);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r; (r = next.fetch_add(1)) < cfg.replications;) {
      try {
        results[r] = run_replication(cfg, r, pool_data ? &*pool_data : nullptr);
      } catch (...) {
        errors[r] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min(worker_threads(), cfg.replications);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < workers; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<std::vector<double>> curves;
  for (const auto& r : results) curves.push_back(r.rmse_curve);
  const auto aggregate = aggregate_curves(curves);
  const std::filesystem::path dir(cfg.output_dir);
  {
    std::ofstream out(dir / "aggregate.csv");
    out << "iteration,median,q25,q75\n";
    for (const auto& row : aggregate) {
      out << row.iteration << ',' << format_double(row.median) << ',' << format_double(row.q25) << ','
          << format_double(row.q75) << '\n';
    }
  }

  // The output location is not part of the experiment's identity.
  json identity = config_json(cfg);
  identity.erase("output_dir");
  const std::string config_text = identity.dump(2);
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(config_text);
  json manifest;
  manifest["config"] = identity;
  manifest["config_hash"] = "fnv1a64:" + hash.str();
  manifest["version"] = "0.1.0";
  manifest["seeds"] = json::array();
  manifest["replications"] = json::array();
  std::string aborted;
  for (const auto& r : results) {
    manifest["seeds"].push_back(r.seed);
    json rep = {{"replication", r.replication},
                {"seed", r.seed},
                {"initial_rmse", r.state.initial_rmse},
                {"final_rmse", r.rmse_curve.back()},
                {"iterations_completed", r.state.history.size()},
                {"sampler", r.state.samples.diagnostics.method}};
    if (!r.state.aborted.empty()) {
      rep["error"] = r.state.aborted;
      if (aborted.empty()) aborted = "replication " + std::to_string(r.replication) + ": " + r.state.aborted;
    }
    manifest["replications"].push_back(rep);
  }
  manifest["final_rmse_median"] = aggregate.empty() ? 0.0 : aggregate.back().median;
  manifest["status"] = aborted.empty() ? "ok" : "aborted";
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
  if (!aborted.empty()) throw Error("RunAborted", aborted);
  return results;
}

}  // namespace hhk
