#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hhk/dataset.hpp"
#include "hhk/types.hpp"

namespace hhk {

/// Per-dimension affine map onto [0,1] plus output standardization.
struct NormalizationRecord {
  Eigen::VectorXd input_min;
  Eigen::VectorXd input_max;
  double output_mean = 0.0;
  double output_std = 1.0;

  Eigen::VectorXd normalize_input(PointView raw) const;
  Eigen::VectorXd denormalize_input(PointView unit) const;
  double standardize_output(double y) const { return (y - output_mean) / output_std; }
  double destandardize_output(double z) const { return z * output_std + output_mean; }
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

/// Numeric CSV with one header line. Lines starting with '#' are skipped.
/// Throws ParseError naming the offending row (1-based, header = 1) and column.
CsvTable read_numeric_csv(std::istream& in);
CsvTable read_numeric_csv(const std::filesystem::path& path);

/// Shortest round-trip decimal form; identical bits give identical text.
std::string format_double(double v);

struct PoolData {
  Dataset pool;  // unit-cube inputs, standardized outputs
  NormalizationRecord norm;
  std::vector<std::string> columns;
};

/// Loads a pool CSV whose last column is the output. Inputs are mapped by
/// the observed per-column min/max; outputs standardized by mean and sample
/// standard deviation. Throws DegenerateColumn on a zero-range column.
PoolData load_pool_csv(const std::filesystem::path& path);
PoolData load_pool_csv(std::istream& in);

}  // namespace hhk
