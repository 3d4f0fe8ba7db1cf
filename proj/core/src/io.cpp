#include "hhk/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "hhk/errors.hpp"

namespace hhk {

Eigen::VectorXd NormalizationRecord::normalize_input(PointView raw) const {
  if (static_cast<Eigen::Index>(raw.size()) != input_min.size()) throw DimensionMismatch("input dimension differs");
  Eigen::VectorXd out(input_min.size());
  for (Eigen::Index m = 0; m < out.size(); ++m) out(m) = (raw[m] - input_min(m)) / (input_max(m) - input_min(m));
  return out;
}

Eigen::VectorXd NormalizationRecord::denormalize_input(PointView unit) const {
  if (static_cast<Eigen::Index>(unit.size()) != input_min.size()) throw DimensionMismatch("input dimension differs");
  Eigen::VectorXd out(input_min.size());
  for (Eigen::Index m = 0; m < out.size(); ++m) out(m) = input_min(m) + unit[m] * (input_max(m) - input_min(m));
  return out;
}

namespace {

std::string trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return std::string(s);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

[[noreturn]] void parse_fail(std::size_t row, std::size_t col, const std::string& what) {
  std::ostringstream msg;
  msg << "row " << row << ", column " << col << ": " << what;
  throw ParseError(msg.str());
}

}  // namespace

CsvTable read_numeric_csv(std::istream& in) {
  CsvTable table;
  std::size_t row = 0;
  bool have_header = false;
  for (std::string line; std::getline(in, line);) {
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    ++row;
    auto fields = split(t);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      std::ostringstream msg;
      msg << "expected " << table.header.size() << " fields, found " << fields.size();
      parse_fail(row, std::min(fields.size(), table.header.size()) + 1, msg.str());
    }
    std::vector<double> values(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const std::string& f = fields[c];
      const char* end = f.data() + f.size();
      auto [ptr, ec] = std::from_chars(f.data(), end, values[c]);
      if (f.empty() || ec != std::errc() || ptr != end) parse_fail(row, c + 1, "not a number: '" + f + "'");
    }
    table.rows.push_back(std::move(values));
  }
  if (!have_header) throw ParseError("CSV input has no header line");
  return table;
}

CsvTable read_numeric_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return read_numeric_csv(in);
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

PoolData load_pool_csv(std::istream& in) {
  CsvTable table = read_numeric_csv(in);
  const std::size_t cols = table.header.size();
  if (cols < 2) throw ParseError("pool CSV needs at least one input column and one output column");
  if (table.rows.size() < 2) throw ParseError("pool CSV needs at least two records");
  const std::size_t d = cols - 1;
  const auto n = static_cast<Eigen::Index>(table.rows.size());

  PoolData out;
  out.columns = table.header;
  NormalizationRecord& norm = out.norm;
  norm.input_min = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d), std::numeric_limits<double>::infinity());
  norm.input_max = -norm.input_min;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (!std::isfinite(table.rows[r][c])) parse_fail(r + 2, c + 1, "non-finite value");
    }
    for (std::size_t m = 0; m < d; ++m) {
      const auto i = static_cast<Eigen::Index>(m);
      norm.input_min(i) = std::min(norm.input_min(i), table.rows[r][m]);
      norm.input_max(i) = std::max(norm.input_max(i), table.rows[r][m]);
    }
  }
  for (std::size_t m = 0; m < d; ++m) {
    const auto i = static_cast<Eigen::Index>(m);
    if (!(norm.input_max(i) > norm.input_min(i))) throw DegenerateColumn("column '" + table.header[m] + "' is constant");
  }
  Eigen::VectorXd y(n);
  for (Eigen::Index r = 0; r < n; ++r) y(r) = table.rows[static_cast<std::size_t>(r)][d];
  norm.output_mean = y.mean();
  norm.output_std = std::sqrt((y.array() - norm.output_mean).square().sum() / static_cast<double>(n - 1));
  if (!(norm.output_std > 0.0)) throw DegenerateColumn("output column '" + table.header[d] + "' is constant");

  PointMatrix x(n, static_cast<Eigen::Index>(d));
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index m = 0; m < x.cols(); ++m) {
      const double u = (table.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(m)] - norm.input_min(m)) /
                       (norm.input_max(m) - norm.input_min(m));
      x(r, m) = std::clamp(u, 0.0, 1.0);
    }
    y(r) = norm.standardize_output(y(r));
  }
  out.pool = Dataset(std::move(x), std::move(y));
  return out;
}

PoolData load_pool_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return load_pool_csv(in);
}

}  // namespace hhk
