#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hhk/gp.hpp"
#include "hhk/types.hpp"

namespace hhk {

/// Logistic sigmoid, evaluated on the branch that cannot overflow.
double sigmoid(double z);

/// σ² exp(−Σ_m (x_m − y_m)² / l_m²). No factor ½ in the exponent.
double rbf_eval(PointView x, PointView y, std::span<const double> lengthscales, double variance);

/// ARD squared-exponential kernel. A zero variance is allowed (the trivial kernel).
class RbfKernel final : public Kernel {
 public:
  RbfKernel(Eigen::VectorXd lengthscales, double variance);

  std::size_t input_dim() const override { return static_cast<std::size_t>(lengthscales_.size()); }
  double eval(PointView x, PointView y) const override;

  const Eigen::VectorXd& lengthscales() const { return lengthscales_; }
  double variance() const { return variance_; }

 private:
  Eigen::VectorXd lengthscales_;
  double variance_;
};

/// Binary tree with J leaves and M = J − 1 internal nodes, encoded by the
/// left/right path-indicator tables. Node and leaf indices are 0-based.
class TreeStructure {
 public:
  struct Child {
    bool is_leaf = true;
    std::size_t index = 0;
  };
  struct PathStep {
    std::size_t node = 0;
    bool left = true;
  };

  /// Trivial tree: one leaf, no nodes.
  TreeStructure() : TreeStructure(symmetric(1)) {}

  /// Complete symmetric tree; `leaves` must be a power of two. Nodes are in
  /// heap order (root 0, children 2i+1 and 2i+2), leaves left to right.
  static TreeStructure symmetric(std::size_t leaves);

  /// Arbitrary binary tree from J×M indicator tables (row j = leaf, column i
  /// = node). Throws InvalidTree unless the tables describe one binary tree.
  static TreeStructure from_tables(const std::vector<std::vector<int>>& xi_left,
                                   const std::vector<std::vector<int>>& xi_right);

  std::size_t leaves() const { return leaves_; }
  std::size_t nodes() const { return leaves_ - 1; }

  int xi_left(std::size_t leaf, std::size_t node) const { return xi_left_[leaf * nodes() + node]; }
  int xi_right(std::size_t leaf, std::size_t node) const { return xi_right_[leaf * nodes() + node]; }

  /// Nodes on the path from the root to `leaf`, root first.
  const std::vector<PathStep>& path(std::size_t leaf) const { return paths_[leaf]; }

  /// Requires nodes() > 0.
  std::size_t root() const { return root_; }
  Child left_child(std::size_t node) const { return left_child_[node]; }
  Child right_child(std::size_t node) const { return right_child_[node]; }

  bool operator==(const TreeStructure& other) const {
    return leaves_ == other.leaves_ && xi_left_ == other.xi_left_ && xi_right_ == other.xi_right_;
  }

 private:
  TreeStructure(std::size_t leaves, std::vector<int> xi_left, std::vector<int> xi_right);

  std::size_t leaves_ = 1;
  std::vector<int> xi_left_;
  std::vector<int> xi_right_;
  std::vector<std::vector<PathStep>> paths_;
  std::size_t root_ = 0;
  std::vector<Child> left_child_;
  std::vector<Child> right_child_;
};

/// Gating hyperplanes w_i = α_i · w̃_i acting on x̃ = (1, x).
struct HyperplaneParams {
  std::vector<Eigen::VectorXd> directions;  // w̃_i ∈ R^{d+1}, bias first
  std::vector<double> relevance;            // α_i > 0

  std::size_t size() const { return directions.size(); }
  Eigen::VectorXd effective(std::size_t node) const { return relevance[node] * directions[node]; }
  /// w_iᵀ x̃
  double activation(std::size_t node, PointView x) const;
};

/// Full kernel parameter set Θ plus the observation-noise variance.
struct HhkParams {
  TreeStructure tree;
  HyperplaneParams planes;
  Eigen::MatrixXd leaf_lengthscales;  // J × d
  Eigen::VectorXd leaf_variances;     // J
  double noise_var = 0.1;

  std::size_t dim() const { return static_cast<std::size_t>(leaf_lengthscales.cols()); }
  std::size_t leaves() const { return tree.leaves(); }
  /// Throws DomainError / DimensionMismatch on inconsistent shapes or
  /// non-positive entries.
  void validate() const;
};

/// Flat ordering of Θ shared by gradients, priors and the unconstrained map:
///   w̃ (M·(d+1), node-major) | α (M) | l (J·d, leaf-major) | σ_j² (J) | σ² (1)
class ParameterLayout {
 public:
  ParameterLayout(TreeStructure tree, std::size_t dim);

  const TreeStructure& tree() const { return tree_; }
  std::size_t dim() const { return dim_; }
  std::size_t nodes() const { return tree_.nodes(); }
  std::size_t leaves() const { return tree_.leaves(); }

  std::size_t size() const { return noise_index() + 1; }
  std::size_t kernel_size() const { return noise_index(); }

  std::size_t direction_index(std::size_t node, std::size_t k) const { return node * (dim_ + 1) + k; }
  std::size_t relevance_index(std::size_t node) const { return nodes() * (dim_ + 1) + node; }
  std::size_t lengthscale_index(std::size_t leaf, std::size_t m) const {
    return nodes() * (dim_ + 2) + leaf * dim_ + m;
  }
  std::size_t variance_index(std::size_t leaf) const { return nodes() * (dim_ + 2) + leaves() * dim_ + leaf; }
  std::size_t noise_index() const { return nodes() * (dim_ + 2) + leaves() * (dim_ + 1); }

  /// Whether entry k lives on (0, ∞); only hyperplane directions are unbounded.
  bool is_positive(std::size_t k) const { return k >= relevance_index(0) || nodes() == 0; }

  /// Stable names such as "w[2][0]", "alpha[1]", "l[3][1]", "var[0]", "noise".
  std::vector<std::string> names() const;

  Eigen::VectorXd flatten(const HhkParams& params) const;
  HhkParams unflatten(const Eigen::VectorXd& flat) const;

 private:
  TreeStructure tree_;
  std::size_t dim_;
};

/// λ_j(x) for every leaf: products of σ(w_iᵀx̃) (left) and 1 − σ(w_iᵀx̃)
/// (right) along the leaf's path.
Eigen::VectorXd leaf_weights(const TreeStructure& tree, const HyperplaneParams& planes, PointView x);

/// Σ_j λ_j(x) λ_j(y) k_j(x, y).
double hhk_eval(const HhkParams& params, PointView x, PointView y);

class HhkKernel final : public Kernel {
 public:
  explicit HhkKernel(HhkParams params);

  std::size_t input_dim() const override { return params_.dim(); }
  double eval(PointView x, PointView y) const override;
  Eigen::MatrixXd gram(const PointMatrix& inputs) const override;
  Eigen::VectorXd cross(const PointMatrix& inputs, PointView query) const override;

  /// T × J matrix of leaf weights at each input row.
  Eigen::MatrixXd weights(const PointMatrix& inputs) const;
  /// cross() with the training weights precomputed.
  Eigen::VectorXd cross_with_weights(const PointMatrix& inputs, const Eigen::MatrixXd& input_weights,
                                     PointView query) const;

  const HhkParams& params() const { return params_; }

 private:
  HhkParams params_;
};

/// dK/dθ over every kernel entry of the flat layout (noise excluded), in
/// layout order; each matrix is T×T and symmetric.
std::vector<Eigen::MatrixXd> hhk_param_gradients(const HhkParams& params, const PointMatrix& inputs);

/// Σ_ab W_ab ∂K_ab/∂θ for every kernel entry of the flat layout, for a
/// symmetric W. Same quantity as contracting hhk_param_gradients with W,
/// without materializing the per-parameter matrices.
Eigen::VectorXd hhk_gradient_contraction(const HhkParams& params, const PointMatrix& inputs,
                                         const Eigen::MatrixXd& weight);

/// CH_w(k1, k2)(x, y) = σ(wᵀx̃)σ(wᵀỹ) k1(x, y) + σ̄(wᵀx̃)σ̄(wᵀỹ) k2(x, y).
KernelHandle change_hyperplane(KernelHandle k1, KernelHandle k2, Eigen::VectorXd w);

/// The HHK rebuilt by nesting change_hyperplane from the root down.
KernelHandle change_hyperplane_tree(const HhkParams& params);

/// Indicator-gated partition kernel Σ_j 1{x, y ∈ D_j} k_j(x, y). Region
/// membership follows the sign tests w̃_iᵀx̃ ≥ 0 (left) / < 0 (right).
class SharpPartitionKernel final : public Kernel {
 public:
  SharpPartitionKernel(TreeStructure tree, std::vector<Eigen::VectorXd> directions,
                       std::vector<RbfKernel> leaves);

  std::size_t input_dim() const override { return leaves_.front().input_dim(); }
  double eval(PointView x, PointView y) const override;

  /// Index j of the unique region D_j containing x.
  std::size_t region(PointView x) const;

  const TreeStructure& tree() const { return tree_; }
  const std::vector<RbfKernel>& leaf_kernels() const { return leaves_; }

 private:
  TreeStructure tree_;
  std::vector<Eigen::VectorXd> directions_;
  std::vector<RbfKernel> leaves_;
};

/// Pointwise limit of the HHK as the hyperplane scale diverges. Relevance
/// scales are ignored. Throws DegenerateHyperplane if some w̃_i = 0.
SharpPartitionKernel sharp_limit_kernel(const HhkParams& params);

/// Stationarity witness for the sharp-limit kernel: requires x, y in one
/// region and x + a, y + a together in a different one (InvalidWitness
/// otherwise), and reports |k(x, y) − k(x + a, y + a)| > 1e-6. A one-leaf
/// tree has a single region and always yields false.
bool verify_nonstationary(const HhkParams& params, PointView x, PointView y, PointView shift);

}  // namespace hhk
