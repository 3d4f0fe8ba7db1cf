// hhk: experiment runner and model inspection tool.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "hhk/analysis.hpp"
#include "hhk/errors.hpp"
#include "hhk/experiment.hpp"
#include "hhk/io.hpp"
#include "hhk/predictive.hpp"
#include "validate.hpp"

namespace fs = std::filesystem;
using namespace hhk;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

int report_error(const std::string& kind, const std::string& message, int code, const std::string& out_dir) {
  nlohmann::json rec = {{"status", "error"}, {"kind", kind}, {"message", message}, {"exit_code", code}};
  std::cerr << rec.dump() << '\n';
  if (!out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    std::ofstream(fs::path(out_dir) / "error.json") << rec.dump(2) << '\n';
  }
  return code;
}

Dataset load_dataset(const fs::path& path) {
  const CsvTable t = read_numeric_csv(path);
  if (t.header.size() < 2) throw ParseError(path.string() + ": need input columns and a y column");
  const std::size_t d = t.header.size() - 1;
  PointMatrix x(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(d));
  Eigen::VectorXd y(x.rows());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (std::size_t m = 0; m < d; ++m) x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(m)) = t.rows[r][m];
    y(static_cast<Eigen::Index>(r)) = t.rows[r][d];
  }
  return Dataset(std::move(x), std::move(y));
}

PointMatrix load_points(const fs::path& path, std::size_t dim) {
  const CsvTable t = read_numeric_csv(path);
  if (t.header.size() < dim) throw ParseError(path.string() + ": fewer columns than the input dimension");
  PointMatrix x(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (std::size_t m = 0; m < dim; ++m) x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(m)) = t.rows[r][m];
  }
  return x;
}

PosteriorSampleSet load_samples(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return read_samples(in);
}

struct Output {
  std::ofstream file;
  std::ostream* stream = &std::cout;
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file.open(path);
      if (!file) throw ParseError("cannot write " + path);
      stream = &file;
    }
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical-hyperplane kernel GP active learning"};
  app.require_subcommand(1);

  std::string config_path, out_dir, strategy, inference;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> leaves;
  auto* run = app.add_subcommand("run", "Run an active-learning experiment from a JSON config");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override base_seed");
  run->add_option("--out", out_dir, "Override output_dir");
  run->add_option("--strategy", strategy, "max-info-gain | random | fixed-params-variance");
  run->add_option("--inference", inference, "hmc | map");
  run->add_option("--leaves", leaves, "Number of leaf kernels (power of two)");

  std::string samples_path, data_path, points_path, pred_out;
  auto* predict = app.add_subcommand("predict", "Predict at query points from saved samples");
  predict->add_option("--samples", samples_path, "Samples file written by run")->required()->check(CLI::ExistingFile);
  predict->add_option("--data", data_path, "Training data CSV (x..., y)")->required()->check(CLI::ExistingFile);
  predict->add_option("--points", points_path, "Query CSV (unit-cube inputs)")->required()->check(CLI::ExistingFile);
  predict->add_option("--out", pred_out, "Output CSV (default stdout)");

  std::string an_samples, an_pool, an_out;
  std::size_t resolution = 50, design_size = 10;
  auto* analyze = app.add_subcommand("analyze", "Activation maps and greedy designs");
  analyze->require_subcommand(1);
  auto* activation = analyze->add_subcommand("activation", "Leaf weights of the MAP draw on a grid");
  activation->add_option("--samples", an_samples)->required()->check(CLI::ExistingFile);
  activation->add_option("--resolution", resolution, "Grid points per axis")->check(CLI::PositiveNumber);
  activation->add_option("--out", an_out, "Output CSV (default stdout)");
  auto* greedy = analyze->add_subcommand("greedy", "Greedy max-variance design with the MAP draw's kernel");
  greedy->add_option("--samples", an_samples)->required()->check(CLI::ExistingFile);
  greedy->add_option("--pool", an_pool, "Candidate CSV (unit-cube inputs)")->required()->check(CLI::ExistingFile);
  greedy->add_option("-T,--size", design_size, "Design size");
  greedy->add_option("--out", an_out, "Output CSV (default stdout)");

  std::uint64_t validate_seed = 1;
  auto* validate = app.add_subcommand("validate", "Run the built-in invariant checks");
  validate->add_option("--seed", validate_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  std::string error_dir = *run ? out_dir : std::string();
  try {
    if (*run) {
      RunConfig cfg = load_run_config(config_path);
      if (seed) cfg.base_seed = *seed;
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      if (!strategy.empty()) cfg.al.strategy = parse_strategy(strategy);
      if (!inference.empty()) cfg.al.inference = parse_inference(inference);
      if (leaves) cfg.model.leaves = *leaves;
      cfg.validate();
      error_dir = cfg.output_dir;
      const auto results = run_experiment(cfg);
      for (const auto& r : results) {
        std::cout << "replication " << r.replication << " seed " << r.seed << " final rmse "
                  << format_double(r.rmse_curve.back()) << '\n';
      }
      std::cout << "wrote " << cfg.output_dir << '\n';
    } else if (*predict) {
      const PosteriorSampleSet samples = load_samples(samples_path);
      const Dataset data = load_dataset(data_path);
      const OutputScaling scaling = OutputScaling::fit(data.outputs());
      const Dataset standardized = data.with_outputs(((data.outputs().array() - scaling.mean) / scaling.scale).matrix());
      const PointMatrix points = load_points(points_path, data.dim());
      const MixturePredictor predictor(samples, standardized);
      Output out(pred_out);
      for (std::size_t m = 0; m < data.dim(); ++m) *out.stream << 'x' << m << ',';
      *out.stream << "mean,variance\n";
      for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const PredictiveMixture mix = predictor.at(row_view(points, i));
        for (double v : row_view(points, i)) *out.stream << format_double(v) << ',';
        *out.stream << format_double(scaling.inverse(mix.mean())) << ','
                    << format_double(mix.variance() * scaling.scale * scaling.scale) << '\n';
      }
    } else if (*analyze) {
      const PosteriorSampleSet samples = load_samples(an_samples);
      Output out(an_out);
      if (*activation) {
        const ActivationMap map = activation_map(samples, resolution);
        const auto d = static_cast<std::size_t>(map.grid.cols());
        for (std::size_t m = 0; m < d; ++m) *out.stream << 'x' << m << ',';
        for (Eigen::Index j = 0; j < map.weights.cols(); ++j) *out.stream << (j ? "," : "") << "w" << j;
        *out.stream << '\n';
        for (Eigen::Index i = 0; i < map.grid.rows(); ++i) {
          for (double v : row_view(map.grid, i)) *out.stream << format_double(v) << ',';
          for (Eigen::Index j = 0; j < map.weights.cols(); ++j) {
            *out.stream << (j ? "," : "") << format_double(map.weights(i, j));
          }
          *out.stream << '\n';
        }
        std::cerr << "leaves by mean activation:";
        for (std::size_t j : map.ranking) std::cerr << ' ' << j;
        std::cerr << '\n';
      } else {
        const HhkParams& p = samples.map_draw();
        const PointMatrix pool = load_points(an_pool, p.dim());
        const HhkKernel kernel(p);
        const GreedyDesign design = greedy_design(pool, kernel, p.noise_var, design_size);
        *out.stream << "step,index";
        for (std::size_t m = 0; m < p.dim(); ++m) *out.stream << ",x" << m;
        *out.stream << ",variance,info\n";
        for (std::size_t s = 0; s < design.indices.size(); ++s) {
          *out.stream << s + 1 << ',' << design.indices[s];
          for (double v : row_view(design.selected, static_cast<Eigen::Index>(s))) *out.stream << ',' << format_double(v);
          *out.stream << ',' << format_double(design.variances[s]) << ',' << format_double(design.info[s]) << '\n';
        }
      }
    } else if (*validate) {
      const int failures = tools::run_validation(validate_seed, std::cout);
      return failures == 0 ? kOk : kRuntimeError;
    }
  } catch (const ConfigError& e) {
    return report_error(e.kind(), e.what(), kConfigError, error_dir);
  } catch (const Error& e) {
    return report_error(e.kind(), e.what(), kRuntimeError, error_dir);
  } catch (const std::exception& e) {
    return report_error("Unexpected", e.what(), kRuntimeError, error_dir);
  }
  return kOk;
}
