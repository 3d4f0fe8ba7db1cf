#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hhk/active_learning.hpp"

namespace hhk {

enum class TaskKind { Exp2d, CsvPool };

/// Everything needed to reproduce an experiment. Parsed from a single JSON
/// file; see README for the schema.
struct RunConfig {
  TaskKind task = TaskKind::Exp2d;
  std::string csv_path;               // csv-pool only
  double test_fraction = 0.2;         // csv-pool: held-out share of records
  std::size_t test_points = 1000;     // exp2d: held-out test set size
  double noise_fraction = 0.01;       // exp2d: noise std relative to output std
  ModelConfig model;
  ALConfig al;
  std::size_t replications = 1;
  std::uint64_t base_seed = 0;
  std::string output_dir = "out";
  bool record_timing = true;          // false writes 0 in the seconds column

  void validate() const;
};

/// Throws ConfigError with the offending key.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& cfg);

struct ReplicationResult {
  std::size_t replication = 0;
  std::uint64_t seed = 0;
  std::vector<double> rmse_curve;  // initial followed by one value per iteration
  ALState state;
};

struct AggregateRow {
  std::size_t iteration = 0;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
};

/// Linear-interpolation quantile (same convention as numpy's default).
double quantile(std::vector<double> values, double q);
std::vector<AggregateRow> aggregate_curves(const std::vector<std::vector<double>>& curves);

/// Runs every replication (seed = base_seed + r), writes
///   rep_XXX_history.csv, rep_XXX_samples.csv, rep_XXX_data.csv,
///   aggregate.csv and manifest.json into cfg.output_dir.
/// Replications run on up to HHK_THREADS workers (default: hardware threads).
std::vector<ReplicationResult> run_experiment(const RunConfig& cfg);

/// Worker count from HHK_THREADS, falling back to hardware concurrency.
std::size_t worker_threads();

/// 64-bit FNV-1a, used for the manifest's config hash.
std::uint64_t fnv1a64(const std::string& text);

}  // namespace hhk
