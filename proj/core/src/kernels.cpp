#include "hhk/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "hhk/errors.hpp"

namespace hhk {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

// log σ(z), accurate in both tails.
double log_sigmoid(double z) {
  if (z >= 0.0) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

constexpr double kLogSpaceThreshold = 1e-300;

void check_same_dim(PointView x, PointView y, std::size_t d, const char* who) {
  if (x.size() != d || y.size() != d) {
    std::ostringstream msg;
    msg << who << ": expected points of dimension " << d << ", got " << x.size() << " and " << y.size();
    throw DimensionMismatch(msg.str());
  }
}

}  // namespace

double rbf_eval(PointView x, PointView y, std::span<const double> lengthscales, double variance) {
  check_same_dim(x, y, lengthscales.size(), "rbf_eval");
  double r2 = 0.0;
  for (std::size_t m = 0; m < x.size(); ++m) {
    const double d = (x[m] - y[m]) / lengthscales[m];
    r2 += d * d;
  }
  return variance * std::exp(-r2);
}

RbfKernel::RbfKernel(Eigen::VectorXd lengthscales, double variance)
    : lengthscales_(std::move(lengthscales)), variance_(variance) {
  for (Eigen::Index m = 0; m < lengthscales_.size(); ++m) {
    if (!(lengthscales_(m) > 0.0)) throw DomainError("RBF lengthscales must be positive");
  }
  if (!(variance_ >= 0.0) || !std::isfinite(variance_)) throw DomainError("RBF variance must be non-negative");
}

double RbfKernel::eval(PointView x, PointView y) const {
  return rbf_eval(x, y, {lengthscales_.data(), static_cast<std::size_t>(lengthscales_.size())}, variance_);
}

// ---------------------------------------------------------------------------
// Tree structure

TreeStructure::TreeStructure(std::size_t leaves, std::vector<int> xi_left, std::vector<int> xi_right)
    : leaves_(leaves), xi_left_(std::move(xi_left)), xi_right_(std::move(xi_right)) {
  const std::size_t m = leaves_ - 1;
  paths_.assign(leaves_, {});
  left_child_.assign(m, {});
  right_child_.assign(m, {});
  if (m == 0) return;

  auto side_set = [&](std::size_t node, bool left) {
    std::set<std::size_t> s;
    for (std::size_t j = 0; j < leaves_; ++j) {
      if ((left ? xi_left_ : xi_right_)[j * m + node] == 1) s.insert(j);
    }
    return s;
  };
  std::vector<std::set<std::size_t>> lsets(m), rsets(m), covers(m);
  for (std::size_t i = 0; i < m; ++i) {
    lsets[i] = side_set(i, true);
    rsets[i] = side_set(i, false);
    if (lsets[i].empty() || rsets[i].empty()) {
      std::ostringstream msg;
      msg << "node " << i << " has an empty subtree";
      throw InvalidTree(msg.str());
    }
    covers[i] = lsets[i];
    covers[i].insert(rsets[i].begin(), rsets[i].end());
  }

  std::size_t roots = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (covers[i].size() == leaves_) {
      root_ = i;
      ++roots;
    }
  }
  if (roots != 1) throw InvalidTree("tree must have exactly one root node covering every leaf");

  std::vector<int> parents(m, 0);
  auto resolve = [&](const std::set<std::size_t>& s) -> Child {
    if (s.size() == 1) return {true, *s.begin()};
    std::size_t found = m;
    for (std::size_t i = 0; i < m; ++i) {
      if (covers[i] == s) {
        if (found != m) throw InvalidTree("two nodes cover the same leaf set");
        found = i;
      }
    }
    if (found == m) throw InvalidTree("subtree leaf set does not match any node");
    ++parents[found];
    return {false, found};
  };
  for (std::size_t i = 0; i < m; ++i) {
    left_child_[i] = resolve(lsets[i]);
    right_child_[i] = resolve(rsets[i]);
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (parents[i] != (i == root_ ? 0 : 1)) throw InvalidTree("node does not have exactly one parent");
  }

  // Walk from the root; every leaf must be reached through exactly the nodes
  // whose tables mention it.
  std::vector<int> reached(leaves_, 0);
  std::vector<std::pair<Child, std::vector<PathStep>>> stack{{Child{false, root_}, {}}};
  while (!stack.empty()) {
    auto [child, path] = std::move(stack.back());
    stack.pop_back();
    if (child.is_leaf) {
      ++reached[child.index];
      paths_[child.index] = std::move(path);
      continue;
    }
    auto lp = path;
    lp.push_back({child.index, true});
    auto rp = std::move(path);
    rp.push_back({child.index, false});
    stack.push_back({left_child_[child.index], std::move(lp)});
    stack.push_back({right_child_[child.index], std::move(rp)});
  }
  for (std::size_t j = 0; j < leaves_; ++j) {
    if (reached[j] != 1) throw InvalidTree("leaf not reached exactly once from the root");
    std::size_t mentioned = 0;
    for (std::size_t i = 0; i < m; ++i) mentioned += covers[i].count(j);
    if (mentioned != paths_[j].size()) throw InvalidTree("indicator tables disagree with the tree paths");
  }
}

TreeStructure TreeStructure::from_tables(const std::vector<std::vector<int>>& xi_left,
                                         const std::vector<std::vector<int>>& xi_right) {
  const std::size_t leaves = xi_left.size();
  if (leaves == 0) throw InvalidTree("tree needs at least one leaf");
  if (xi_right.size() != leaves) throw InvalidTree("left/right tables have different leaf counts");
  const std::size_t m = leaves - 1;
  std::vector<int> l(leaves * m), r(leaves * m);
  for (std::size_t j = 0; j < leaves; ++j) {
    if (xi_left[j].size() != m || xi_right[j].size() != m) {
      throw InvalidTree("indicator tables must have J - 1 node columns");
    }
    for (std::size_t i = 0; i < m; ++i) {
      const int a = xi_left[j][i];
      const int b = xi_right[j][i];
      if ((a != 0 && a != 1) || (b != 0 && b != 1)) throw InvalidTree("indicator entries must be 0 or 1");
      if (a + b > 1) throw InvalidTree("a leaf cannot be in both subtrees of a node");
      l[j * m + i] = a;
      r[j * m + i] = b;
    }
  }
  return TreeStructure(leaves, std::move(l), std::move(r));
}

TreeStructure TreeStructure::symmetric(std::size_t leaves) {
  if (leaves == 0 || (leaves & (leaves - 1)) != 0) {
    std::ostringstream msg;
    msg << "symmetric trees need a power-of-two leaf count, got " << leaves;
    throw InvalidTree(msg.str());
  }
  const std::size_t m = leaves - 1;
  std::vector<std::vector<int>> l(leaves, std::vector<int>(m, 0));
  std::vector<std::vector<int>> r = l;
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t level = 0;
    while ((std::size_t{2} << level) - 1 <= i) ++level;
    const std::size_t pos = i - ((std::size_t{1} << level) - 1);
    const std::size_t span = leaves >> level;
    const std::size_t begin = pos * span;
    for (std::size_t j = begin; j < begin + span / 2; ++j) l[j][i] = 1;
    for (std::size_t j = begin + span / 2; j < begin + span; ++j) r[j][i] = 1;
  }
  return from_tables(l, r);
}

// ---------------------------------------------------------------------------
// Parameters

double HyperplaneParams::activation(std::size_t node, PointView x) const {
  const Eigen::VectorXd& w = directions[node];
  double z = w(0);
  for (std::size_t m = 0; m < x.size(); ++m) z += w(static_cast<Eigen::Index>(m + 1)) * x[m];
  return relevance[node] * z;
}

void HhkParams::validate() const {
  const std::size_t j_count = tree.leaves();
  const std::size_t m_count = tree.nodes();
  const std::size_t d = dim();
  if (planes.directions.size() != m_count || planes.relevance.size() != m_count) {
    throw DimensionMismatch("hyperplane count must equal the number of tree nodes");
  }
  for (std::size_t i = 0; i < m_count; ++i) {
    if (static_cast<std::size_t>(planes.directions[i].size()) != d + 1) {
      throw DimensionMismatch("hyperplane directions must have d + 1 entries");
    }
    if (!planes.directions[i].allFinite()) throw DomainError("non-finite hyperplane direction");
    if (!(planes.relevance[i] > 0.0) || !std::isfinite(planes.relevance[i])) {
      throw DomainError("relevance scales must be positive");
    }
  }
  if (static_cast<std::size_t>(leaf_lengthscales.rows()) != j_count ||
      static_cast<std::size_t>(leaf_variances.size()) != j_count) {
    throw DimensionMismatch("leaf parameter count must equal the number of leaves");
  }
  if (!(leaf_lengthscales.array() > 0.0).all() || !leaf_lengthscales.allFinite()) {
    throw DomainError("lengthscales must be positive");
  }
  if (!(leaf_variances.array() > 0.0).all() || !leaf_variances.allFinite()) {
    throw DomainError("leaf variances must be positive");
  }
  if (!(noise_var > 0.0) || !std::isfinite(noise_var)) throw DomainError("noise variance must be positive");
}

ParameterLayout::ParameterLayout(TreeStructure tree, std::size_t dim) : tree_(std::move(tree)), dim_(dim) {
  if (dim_ == 0) throw DimensionMismatch("input dimension must be at least 1");
}

std::vector<std::string> ParameterLayout::names() const {
  std::vector<std::string> out(size());
  for (std::size_t i = 0; i < nodes(); ++i) {
    for (std::size_t k = 0; k <= dim_; ++k) {
      out[direction_index(i, k)] = "w[" + std::to_string(i) + "][" + std::to_string(k) + "]";
    }
    out[relevance_index(i)] = "alpha[" + std::to_string(i) + "]";
  }
  for (std::size_t j = 0; j < leaves(); ++j) {
    for (std::size_t m = 0; m < dim_; ++m) {
      out[lengthscale_index(j, m)] = "l[" + std::to_string(j) + "][" + std::to_string(m) + "]";
    }
    out[variance_index(j)] = "var[" + std::to_string(j) + "]";
  }
  out[noise_index()] = "noise";
  return out;
}

Eigen::VectorXd ParameterLayout::flatten(const HhkParams& params) const {
  if (!(params.tree == tree_) || params.dim() != dim_) throw DimensionMismatch("parameters do not match layout");
  Eigen::VectorXd v(static_cast<Eigen::Index>(size()));
  for (std::size_t i = 0; i < nodes(); ++i) {
    for (std::size_t k = 0; k <= dim_; ++k) {
      v(static_cast<Eigen::Index>(direction_index(i, k))) = params.planes.directions[i](static_cast<Eigen::Index>(k));
    }
    v(static_cast<Eigen::Index>(relevance_index(i))) = params.planes.relevance[i];
  }
  for (std::size_t j = 0; j < leaves(); ++j) {
    for (std::size_t m = 0; m < dim_; ++m) {
      v(static_cast<Eigen::Index>(lengthscale_index(j, m))) =
          params.leaf_lengthscales(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(m));
    }
    v(static_cast<Eigen::Index>(variance_index(j))) = params.leaf_variances(static_cast<Eigen::Index>(j));
  }
  v(static_cast<Eigen::Index>(noise_index())) = params.noise_var;
  return v;
}

HhkParams ParameterLayout::unflatten(const Eigen::VectorXd& flat) const {
  if (static_cast<std::size_t>(flat.size()) != size()) throw DimensionMismatch("flat parameter vector has wrong size");
  HhkParams p;
  p.tree = tree_;
  p.planes.directions.resize(nodes());
  p.planes.relevance.resize(nodes());
  for (std::size_t i = 0; i < nodes(); ++i) {
    p.planes.directions[i] = flat.segment(static_cast<Eigen::Index>(direction_index(i, 0)),
                                          static_cast<Eigen::Index>(dim_ + 1));
    p.planes.relevance[i] = flat(static_cast<Eigen::Index>(relevance_index(i)));
  }
  p.leaf_lengthscales.resize(static_cast<Eigen::Index>(leaves()), static_cast<Eigen::Index>(dim_));
  p.leaf_variances.resize(static_cast<Eigen::Index>(leaves()));
  for (std::size_t j = 0; j < leaves(); ++j) {
    for (std::size_t m = 0; m < dim_; ++m) {
      p.leaf_lengthscales(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(m)) =
          flat(static_cast<Eigen::Index>(lengthscale_index(j, m)));
    }
    p.leaf_variances(static_cast<Eigen::Index>(j)) = flat(static_cast<Eigen::Index>(variance_index(j)));
  }
  p.noise_var = flat(static_cast<Eigen::Index>(noise_index()));
  return p;
}

// ---------------------------------------------------------------------------
// Weights and kernel evaluation

namespace {

// σ(z_i) and σ(−z_i) for every node at x.
void gate_values(const HyperplaneParams& planes, PointView x, std::vector<double>& up, std::vector<double>& down,
                 std::vector<double>& z) {
  const std::size_t m = planes.size();
  up.resize(m);
  down.resize(m);
  z.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    z[i] = planes.activation(i, x);
    up[i] = sigmoid(z[i]);
    down[i] = sigmoid(-z[i]);
  }
}

void weights_from_gates(const TreeStructure& tree, const std::vector<double>& up, const std::vector<double>& down,
                        const std::vector<double>& z, double* out) {
  for (std::size_t j = 0; j < tree.leaves(); ++j) {
    double prod = 1.0;
    bool tiny = false;
    for (const auto& step : tree.path(j)) {
      const double f = step.left ? up[step.node] : down[step.node];
      tiny = tiny || f < kLogSpaceThreshold;
      prod *= f;
    }
    if (tiny) {
      double log_prod = 0.0;
      for (const auto& step : tree.path(j)) {
        log_prod += log_sigmoid(step.left ? z[step.node] : -z[step.node]);
      }
      prod = std::exp(log_prod);
    }
    out[j] = prod;
  }
}

}  // namespace

Eigen::VectorXd leaf_weights(const TreeStructure& tree, const HyperplaneParams& planes, PointView x) {
  if (planes.size() != tree.nodes()) throw DimensionMismatch("hyperplane count must equal the number of tree nodes");
  for (const auto& w : planes.directions) {
    if (static_cast<std::size_t>(w.size()) != x.size() + 1) {
      throw DimensionMismatch("point dimension does not match the hyperplanes");
    }
  }
  std::vector<double> up, down, z;
  gate_values(planes, x, up, down, z);
  Eigen::VectorXd lambda(static_cast<Eigen::Index>(tree.leaves()));
  weights_from_gates(tree, up, down, z, lambda.data());
  return lambda;
}

double hhk_eval(const HhkParams& params, PointView x, PointView y) {
  const std::size_t d = params.dim();
  check_same_dim(x, y, d, "hhk_eval");
  const Eigen::VectorXd lx = leaf_weights(params.tree, params.planes, x);
  const Eigen::VectorXd ly = leaf_weights(params.tree, params.planes, y);
  double k = 0.0;
  for (std::size_t j = 0; j < params.leaves(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const Eigen::VectorXd ls = params.leaf_lengthscales.row(jj).transpose();
    k += lx(jj) * ly(jj) * rbf_eval(x, y, {ls.data(), d}, params.leaf_variances(jj));
  }
  return k;
}

HhkKernel::HhkKernel(HhkParams params) : params_(std::move(params)) { params_.validate(); }

double HhkKernel::eval(PointView x, PointView y) const { return hhk_eval(params_, x, y); }

Eigen::MatrixXd HhkKernel::weights(const PointMatrix& inputs) const {
  if (static_cast<std::size_t>(inputs.cols()) != params_.dim() && inputs.rows() > 0) {
    throw DimensionMismatch("input dimension does not match the kernel");
  }
  const auto n = inputs.rows();
  const auto j_count = static_cast<Eigen::Index>(params_.leaves());
  // Row-major so each point's weights are contiguous.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w(n, j_count);
  std::vector<double> up, down, z;
  for (Eigen::Index a = 0; a < n; ++a) {
    gate_values(params_.planes, row_view(inputs, a), up, down, z);
    weights_from_gates(params_.tree, up, down, z, w.row(a).data());
  }
  return w;
}

Eigen::MatrixXd HhkKernel::gram(const PointMatrix& inputs) const {
  const auto n = inputs.rows();
  const auto d = inputs.cols();
  if (n > 0 && static_cast<std::size_t>(d) != params_.dim()) {
    throw DimensionMismatch("input dimension does not match the kernel");
  }
  const Eigen::MatrixXd w = weights(inputs);
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  PointMatrix scaled(n, d);
  for (std::size_t j = 0; j < params_.leaves(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const double var = params_.leaf_variances(jj);
    for (Eigen::Index a = 0; a < n; ++a) {
      for (Eigen::Index m = 0; m < d; ++m) scaled(a, m) = inputs(a, m) / params_.leaf_lengthscales(jj, m);
    }
    for (Eigen::Index b = 0; b < n; ++b) {
      const double wb = w(b, jj) * var;
      if (wb == 0.0) continue;
      for (Eigen::Index a = b; a < n; ++a) {
        const double wab = w(a, jj) * wb;
        if (wab == 0.0) continue;
        double r2 = 0.0;
        for (Eigen::Index m = 0; m < d; ++m) {
          const double diff = scaled(a, m) - scaled(b, m);
          r2 += diff * diff;
        }
        k(a, b) += wab * std::exp(-r2);
      }
    }
  }
  for (Eigen::Index b = 0; b < n; ++b) {
    for (Eigen::Index a = b + 1; a < n; ++a) k(b, a) = k(a, b);
  }
  return k;
}

Eigen::VectorXd HhkKernel::cross_with_weights(const PointMatrix& inputs, const Eigen::MatrixXd& input_weights,
                                              PointView query) const {
  const std::size_t d = params_.dim();
  if (query.size() != d) throw DimensionMismatch("query dimension does not match the kernel");
  const Eigen::VectorXd lq = leaf_weights(params_.tree, params_.planes, query);
  const auto n = inputs.rows();
  Eigen::VectorXd k = Eigen::VectorXd::Zero(n);
  for (std::size_t j = 0; j < params_.leaves(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const double wq = lq(jj) * params_.leaf_variances(jj);
    if (wq == 0.0) continue;
    for (Eigen::Index a = 0; a < n; ++a) {
      const double wa = input_weights(a, jj) * wq;
      if (wa == 0.0) continue;
      double r2 = 0.0;
      for (std::size_t m = 0; m < d; ++m) {
        const double diff = (inputs(a, static_cast<Eigen::Index>(m)) - query[m]) /
                            params_.leaf_lengthscales(jj, static_cast<Eigen::Index>(m));
        r2 += diff * diff;
      }
      k(a) += wa * std::exp(-r2);
    }
  }
  return k;
}

Eigen::VectorXd HhkKernel::cross(const PointMatrix& inputs, PointView query) const {
  return cross_with_weights(inputs, weights(inputs), query);
}

// ---------------------------------------------------------------------------
// Gradients

std::vector<Eigen::MatrixXd> hhk_param_gradients(const HhkParams& params, const PointMatrix& inputs) {
  params.validate();
  const ParameterLayout layout(params.tree, params.dim());
  const auto n = inputs.rows();
  const std::size_t d = params.dim();
  const std::size_t j_count = params.leaves();
  const std::size_t m_count = params.tree.nodes();
  std::vector<Eigen::MatrixXd> grads(layout.kernel_size(), Eigen::MatrixXd::Zero(n, n));

  // Per point: λ_j, σ(z_i), x̃.
  std::vector<Eigen::VectorXd> lam(static_cast<std::size_t>(n));
  std::vector<std::vector<double>> sig(static_cast<std::size_t>(n));
  for (Eigen::Index a = 0; a < n; ++a) {
    const PointView x = row_view(inputs, a);
    lam[static_cast<std::size_t>(a)] = leaf_weights(params.tree, params.planes, x);
    auto& s = sig[static_cast<std::size_t>(a)];
    s.resize(m_count);
    for (std::size_t i = 0; i < m_count; ++i) s[i] = sigmoid(params.planes.activation(i, x));
  }
  auto xtilde = [&](Eigen::Index a, std::size_t k) { return k == 0 ? 1.0 : inputs(a, static_cast<Eigen::Index>(k - 1)); };
  // ∂λ_j(a)/∂z_i
  auto dlam_dz = [&](Eigen::Index a, std::size_t j, std::size_t i) {
    const double s = sig[static_cast<std::size_t>(a)][i];
    const double c = params.tree.xi_left(j, i) * (1.0 - s) - params.tree.xi_right(j, i) * s;
    return lam[static_cast<std::size_t>(a)](static_cast<Eigen::Index>(j)) * c;
  };

  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      const PointView xa = row_view(inputs, a);
      const PointView xb = row_view(inputs, b);
      for (std::size_t j = 0; j < j_count; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        const Eigen::VectorXd ls = params.leaf_lengthscales.row(jj).transpose();
        const double kj = rbf_eval(xa, xb, {ls.data(), d}, params.leaf_variances(jj));
        const double la = lam[static_cast<std::size_t>(a)](jj);
        const double lb = lam[static_cast<std::size_t>(b)](jj);

        grads[layout.variance_index(j)](a, b) += la * lb * kj / params.leaf_variances(jj);
        for (std::size_t m = 0; m < d; ++m) {
          const double l = ls(static_cast<Eigen::Index>(m));
          const double diff = xa[m] - xb[m];
          grads[layout.lengthscale_index(j, m)](a, b) += la * lb * kj * 2.0 * diff * diff / (l * l * l);
        }
        for (std::size_t i = 0; i < m_count; ++i) {
          const double ga = dlam_dz(a, j, i);
          const double gb = dlam_dz(b, j, i);
          if (ga == 0.0 && gb == 0.0) continue;
          const double alpha = params.planes.relevance[i];
          const Eigen::VectorXd& wt = params.planes.directions[i];
          double za = 0.0, zb = 0.0;
          for (std::size_t k = 0; k <= d; ++k) {
            za += wt(static_cast<Eigen::Index>(k)) * xtilde(a, k);
            zb += wt(static_cast<Eigen::Index>(k)) * xtilde(b, k);
          }
          for (std::size_t k = 0; k <= d; ++k) {
            grads[layout.direction_index(i, k)](a, b) += (ga * alpha * xtilde(a, k) * lb + la * gb * alpha * xtilde(b, k)) * kj;
          }
          grads[layout.relevance_index(i)](a, b) += (ga * za * lb + la * gb * zb) * kj;
        }
      }
    }
  }
  return grads;
}

Eigen::VectorXd hhk_gradient_contraction(const HhkParams& params, const PointMatrix& inputs,
                                         const Eigen::MatrixXd& weight) {
  const ParameterLayout layout(params.tree, params.dim());
  const auto n = inputs.rows();
  const auto d = static_cast<Eigen::Index>(params.dim());
  const std::size_t j_count = params.leaves();
  const std::size_t m_count = params.tree.nodes();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.kernel_size()));
  if (n == 0) return grad;
  if (weight.rows() != n || weight.cols() != n) throw DimensionMismatch("weight matrix size differs from input count");

  HhkKernel kernel(params);
  const Eigen::MatrixXd lam = kernel.weights(inputs);

  // G(a, j) = Σ_b W_ab λ_j(b) k_j(a, b)
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(j_count));
  PointMatrix scaled(n, d);
  std::vector<double> lgrad(static_cast<std::size_t>(d));
  for (std::size_t j = 0; j < j_count; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const double var = params.leaf_variances(jj);
    for (Eigen::Index a = 0; a < n; ++a) {
      for (Eigen::Index m = 0; m < d; ++m) scaled(a, m) = inputs(a, m) / params.leaf_lengthscales(jj, m);
    }
    double var_grad = 0.0;
    std::fill(lgrad.begin(), lgrad.end(), 0.0);
    for (Eigen::Index b = 0; b < n; ++b) {
      const double lb = lam(b, jj);
      for (Eigen::Index a = b; a < n; ++a) {
        double r2 = 0.0;
        for (Eigen::Index m = 0; m < d; ++m) {
          const double diff = scaled(a, m) - scaled(b, m);
          r2 += diff * diff;
        }
        const double e = std::exp(-r2);
        const double kab = var * e;
        const double wab = weight(a, b);
        const double la = lam(a, jj);
        g(a, jj) += wab * lb * kab;
        const double mult = (a == b) ? 1.0 : 2.0;  // W and K symmetric
        if (a != b) g(b, jj) += wab * la * kab;
        const double core = mult * wab * la * lb * e;
        if (core == 0.0) continue;
        var_grad += core;
        for (Eigen::Index m = 0; m < d; ++m) {
          const double diff = scaled(a, m) - scaled(b, m);
          // ∂/∂l of exp(−(Δ/l)²) = exp(·) · 2Δ²/l³ = exp(·) · 2 (Δ/l)² / l
          lgrad[static_cast<std::size_t>(m)] += core * var * 2.0 * diff * diff / params.leaf_lengthscales(jj, m);
        }
      }
    }
    grad(static_cast<Eigen::Index>(layout.variance_index(j))) = var_grad;
    for (Eigen::Index m = 0; m < d; ++m) {
      grad(static_cast<Eigen::Index>(layout.lengthscale_index(j, static_cast<std::size_t>(m)))) =
          lgrad[static_cast<std::size_t>(m)];
    }
  }

  if (m_count == 0) return grad;
  // S_i(a) = 2 Σ_j ∂λ_j(a)/∂z_i · G(a, j), then chain through z_i = α_i w̃_iᵀx̃.
  for (Eigen::Index a = 0; a < n; ++a) {
    const PointView x = row_view(inputs, a);
    for (std::size_t i = 0; i < m_count; ++i) {
      const double s = sigmoid(params.planes.activation(i, x));
      double si = 0.0;
      for (std::size_t j = 0; j < j_count; ++j) {
        const int left = params.tree.xi_left(j, i);
        const int right = params.tree.xi_right(j, i);
        if (left == 0 && right == 0) continue;
        const auto jj = static_cast<Eigen::Index>(j);
        const double c = left * (1.0 - s) - right * s;
        si += 2.0 * lam(a, jj) * c * g(a, jj);
      }
      const double alpha = params.planes.relevance[i];
      const Eigen::VectorXd& wt = params.planes.directions[i];
      double zt = wt(0);
      grad(static_cast<Eigen::Index>(layout.direction_index(i, 0))) += si * alpha;
      for (Eigen::Index m = 0; m < d; ++m) {
        zt += wt(m + 1) * x[static_cast<std::size_t>(m)];
        grad(static_cast<Eigen::Index>(layout.direction_index(i, static_cast<std::size_t>(m) + 1))) +=
            si * alpha * x[static_cast<std::size_t>(m)];
      }
      grad(static_cast<Eigen::Index>(layout.relevance_index(i))) += si * zt;
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Change-hyperplane operator

namespace {

class ChangeHyperplaneKernel final : public Kernel {
 public:
  ChangeHyperplaneKernel(KernelHandle k1, KernelHandle k2, Eigen::VectorXd w)
      : k1_(std::move(k1)), k2_(std::move(k2)), w_(std::move(w)) {
    if (!k1_ || !k2_) throw DomainError("change_hyperplane needs two kernels");
    const std::size_t d = k1_->input_dim();
    if (k2_->input_dim() != d || static_cast<std::size_t>(w_.size()) != d + 1) {
      throw DimensionMismatch("change_hyperplane: kernels and hyperplane disagree on dimension");
    }
  }

  std::size_t input_dim() const override { return k1_->input_dim(); }

  double eval(PointView x, PointView y) const override {
    check_same_dim(x, y, input_dim(), "change_hyperplane");
    const double zx = activation(x);
    const double zy = activation(y);
    return sigmoid(zx) * sigmoid(zy) * k1_->eval(x, y) + sigmoid(-zx) * sigmoid(-zy) * k2_->eval(x, y);
  }

 private:
  double activation(PointView x) const {
    double z = w_(0);
    for (std::size_t m = 0; m < x.size(); ++m) z += w_(static_cast<Eigen::Index>(m + 1)) * x[m];
    return z;
  }

  KernelHandle k1_, k2_;
  Eigen::VectorXd w_;
};

KernelHandle build_subtree(const HhkParams& params, TreeStructure::Child child) {
  if (child.is_leaf) {
    const auto j = static_cast<Eigen::Index>(child.index);
    return std::make_shared<RbfKernel>(params.leaf_lengthscales.row(j).transpose(), params.leaf_variances(j));
  }
  return change_hyperplane(build_subtree(params, params.tree.left_child(child.index)),
                           build_subtree(params, params.tree.right_child(child.index)),
                           params.planes.effective(child.index));
}

}  // namespace

KernelHandle change_hyperplane(KernelHandle k1, KernelHandle k2, Eigen::VectorXd w) {
  return std::make_shared<ChangeHyperplaneKernel>(std::move(k1), std::move(k2), std::move(w));
}

KernelHandle change_hyperplane_tree(const HhkParams& params) {
  params.validate();
  if (params.tree.nodes() == 0) return build_subtree(params, {true, 0});
  return build_subtree(params, {false, params.tree.root()});
}

// ---------------------------------------------------------------------------
// Sharp-partition limit

SharpPartitionKernel::SharpPartitionKernel(TreeStructure tree, std::vector<Eigen::VectorXd> directions,
                                           std::vector<RbfKernel> leaves)
    : tree_(std::move(tree)), directions_(std::move(directions)), leaves_(std::move(leaves)) {
  if (leaves_.size() != tree_.leaves()) throw DimensionMismatch("one leaf kernel per tree leaf is required");
  if (directions_.size() != tree_.nodes()) throw DimensionMismatch("one direction per tree node is required");
  const std::size_t d = leaves_.front().input_dim();
  for (const auto& leaf : leaves_) {
    if (leaf.input_dim() != d) throw DimensionMismatch("leaf kernels disagree on dimension");
  }
  for (const auto& w : directions_) {
    if (static_cast<std::size_t>(w.size()) != d + 1) throw DimensionMismatch("directions must have d + 1 entries");
    if ((w.array() == 0.0).all()) throw DegenerateHyperplane("hyperplane direction is zero; the sharp limit is undefined");
  }
}

std::size_t SharpPartitionKernel::region(PointView x) const {
  if (x.size() != input_dim()) throw DimensionMismatch("point dimension does not match the kernel");
  for (std::size_t j = 0; j < tree_.leaves(); ++j) {
    bool inside = true;
    for (const auto& step : tree_.path(j)) {
      const Eigen::VectorXd& w = directions_[step.node];
      double z = w(0);
      for (std::size_t m = 0; m < x.size(); ++m) z += w(static_cast<Eigen::Index>(m + 1)) * x[m];
      // Boundary points belong to the left subtree.
      if ((z >= 0.0) != step.left) {
        inside = false;
        break;
      }
    }
    if (inside) return j;
  }
  throw InvalidTree("point not covered by any region");
}

double SharpPartitionKernel::eval(PointView x, PointView y) const {
  const std::size_t rx = region(x);
  if (rx != region(y)) return 0.0;
  return leaves_[rx].eval(x, y);
}

SharpPartitionKernel sharp_limit_kernel(const HhkParams& params) {
  params.validate();
  std::vector<RbfKernel> leaves;
  leaves.reserve(params.leaves());
  for (std::size_t j = 0; j < params.leaves(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    leaves.emplace_back(params.leaf_lengthscales.row(jj).transpose(), params.leaf_variances(jj));
  }
  return SharpPartitionKernel(params.tree, params.planes.directions, std::move(leaves));
}

bool verify_nonstationary(const HhkParams& params, PointView x, PointView y, PointView shift) {
  const std::size_t d = params.dim();
  if (x.size() != d || y.size() != d || shift.size() != d) throw DimensionMismatch("witness dimension mismatch");
  if (params.tree.nodes() == 0) return false;
  const SharpPartitionKernel k = sharp_limit_kernel(params);
  std::vector<double> xa(d), ya(d);
  for (std::size_t m = 0; m < d; ++m) {
    xa[m] = x[m] + shift[m];
    ya[m] = y[m] + shift[m];
  }
  const std::size_t r = k.region(x);
  const std::size_t r_shift = k.region(xa);
  if (k.region(y) != r || k.region(ya) != r_shift || r == r_shift) {
    throw InvalidWitness("x, y must share a region and x + a, y + a must share a different one");
  }
  return std::abs(k.eval(x, y) - k.eval(xa, ya)) > 1e-6;
}

}  // namespace hhk
