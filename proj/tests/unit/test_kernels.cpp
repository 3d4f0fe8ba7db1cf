#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "../support/oracles.hpp"
#include "hhk/errors.hpp"
#include "hhk/gp.hpp"
#include "hhk/kernels.hpp"
#include "hhk/priors.hpp"

using namespace hhk;

namespace {

HhkParams draw(std::size_t leaves, std::size_t d, std::mt19937_64& rng) {
  return sample_prior(ParameterLayout(TreeStructure::symmetric(leaves), d), PriorSpec{}, rng);
}

HhkParams with_zero_planes(std::size_t leaves, std::size_t d) {
  std::mt19937_64 rng(0);
  HhkParams p = draw(leaves, d, rng);
  for (auto& w : p.planes.directions) w.setZero();
  return p;
}

}  // namespace

TEST(Rbf, Examples) {
  const double x[] = {0.2}, y[] = {1.2};
  const double l[] = {1.0};
  EXPECT_DOUBLE_EQ(rbf_eval(x, x, l, 2.5), 2.5);
  EXPECT_NEAR(rbf_eval(x, y, l, 1.0), std::exp(-1.0), 1e-16);
  const double big[] = {1e9};
  EXPECT_NEAR(rbf_eval(x, y, big, 0.7), 0.7, 1e-15);
  const RbfKernel k(Eigen::Vector2d(0.5, 0.5), 1.0);
  EXPECT_THROW(k.eval(x, y), DimensionMismatch);
}

TEST(Rbf, SymmetricAndArd) {
  const double x[] = {0.1, 0.9}, y[] = {0.6, 0.3};
  const double l[] = {0.3, 2.0};
  EXPECT_EQ(rbf_eval(x, y, l, 1.1), rbf_eval(y, x, l, 1.1));
  const double r = 0.25 / 0.09 + 0.36 / 4.0;
  EXPECT_NEAR(rbf_eval(x, y, l, 1.1), 1.1 * std::exp(-r), 1e-15);
}

TEST(Tree, SymmetricShape) {
  for (std::size_t J : {1u, 2u, 4u, 8u, 16u}) {
    const TreeStructure t = TreeStructure::symmetric(J);
    EXPECT_EQ(t.nodes(), J - 1);
    for (std::size_t j = 0; j < J; ++j) {
      std::size_t depth = 0;
      for (std::size_t i = 0; i < t.nodes(); ++i) {
        EXPECT_LE(t.xi_left(j, i) + t.xi_right(j, i), 1);
        depth += static_cast<std::size_t>(t.xi_left(j, i) + t.xi_right(j, i));
      }
      EXPECT_EQ(depth, t.path(j).size());
      EXPECT_EQ(1u << depth, J);
    }
  }
  EXPECT_THROW(TreeStructure::symmetric(3), InvalidTree);
  EXPECT_THROW(TreeStructure::symmetric(0), InvalidTree);
}

TEST(Tree, HeapOrderPaths) {
  const TreeStructure t = TreeStructure::symmetric(4);
  // leaf 0: root left, node 1 left; leaf 3: root right, node 2 right.
  ASSERT_EQ(t.path(0).size(), 2u);
  EXPECT_EQ(t.path(0)[0].node, 0u);
  EXPECT_TRUE(t.path(0)[0].left);
  EXPECT_EQ(t.path(0)[1].node, 1u);
  EXPECT_EQ(t.path(3)[1].node, 2u);
  EXPECT_FALSE(t.path(3)[1].left);
  EXPECT_EQ(t.xi_left(1, 0), 1);
  EXPECT_EQ(t.xi_right(1, 1), 1);
  EXPECT_EQ(t.xi_left(2, 2), 1);
}

TEST(Tree, ArbitraryTables) {
  // Caterpillar: node 0 splits {0} | {1,2}; node 1 splits {1} | {2}.
  const std::vector<std::vector<int>> L{{1, 0}, {0, 1}, {0, 0}};
  const std::vector<std::vector<int>> R{{0, 0}, {1, 0}, {1, 1}};
  const TreeStructure t = TreeStructure::from_tables(L, R);
  EXPECT_EQ(t.leaves(), 3u);
  EXPECT_EQ(t.path(2).size(), 2u);
  HhkParams p;
  p.tree = t;
  p.planes.directions = {Eigen::Vector2d(0.3, -1.0), Eigen::Vector2d(-0.2, 2.0)};
  p.planes.relevance = {1.5, 0.7};
  p.leaf_lengthscales = Eigen::MatrixXd::Constant(3, 1, 0.4);
  p.leaf_variances = Eigen::Vector3d(1.0, 2.0, 0.5);
  const double x[] = {0.42};
  const Eigen::VectorXd w = leaf_weights(t, p.planes, x);
  EXPECT_NEAR(w.sum(), 1.0, 1e-15);
  EXPECT_LT((w - oracle::weights(p, x)).cwiseAbs().maxCoeff(), 1e-15);

  // Leaf 2 listed in both subtrees of node 0.
  EXPECT_THROW(TreeStructure::from_tables({{1, 0}, {0, 1}, {1, 0}}, R), InvalidTree);
  // Node 1 has an empty right side.
  EXPECT_THROW(TreeStructure::from_tables({{1, 0}, {0, 1}, {0, 1}}, {{0, 0}, {1, 0}, {1, 0}}), InvalidTree);
  // Wrong column count.
  EXPECT_THROW(TreeStructure::from_tables({{1}, {0}, {0}}, {{0}, {1}, {1}}), InvalidTree);
}

TEST(LeafWeights, Examples) {
  const HhkParams p4 = with_zero_planes(4, 2);
  const double x[] = {0.3, 0.8};
  const Eigen::VectorXd w = leaf_weights(p4.tree, p4.planes, x);
  for (Eigen::Index j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(w(j), 0.25);

  const HhkParams p1 = with_zero_planes(1, 2);
  EXPECT_EQ(leaf_weights(p1.tree, p1.planes, x)(0), 1.0);

  HyperplaneParams planes;
  planes.directions = {Eigen::Vector2d(0.0, 4.0)};
  planes.relevance = {1.0};
  const double h[] = {0.5};
  const Eigen::VectorXd w2 = leaf_weights(TreeStructure::symmetric(2), planes, h);
  EXPECT_NEAR(w2(0), 0.8807970779778823, 1e-15);
  EXPECT_NEAR(w2(1), 1.0 - 0.8807970779778823, 1e-15);
}

TEST(LeafWeights, MatchTableOracle) {
  std::mt19937_64 rng(21);
  for (std::size_t J : {2u, 4u, 8u}) {
    const HhkParams p = draw(J, 3, rng);
    const PointMatrix x = oracle::uniform_points(50, 3, rng);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const Eigen::VectorXd w = leaf_weights(p.tree, p.planes, row_view(x, i));
      EXPECT_LT((w - oracle::weights(p, row_view(x, i))).cwiseAbs().maxCoeff(), 1e-14);
    }
  }
}

TEST(LeafWeights, ExtremeScalesStayFinite) {
  HhkParams p = with_zero_planes(8, 2);
  std::mt19937_64 rng(22);
  std::normal_distribution<double> g(0.0, 1.0);
  for (std::size_t i = 0; i < p.planes.size(); ++i) {
    p.planes.directions[i] = Eigen::Vector3d(g(rng), g(rng), g(rng));
    p.planes.relevance[i] = 1e6;
  }
  const PointMatrix x = oracle::uniform_points(200, 2, rng);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::VectorXd w = leaf_weights(p.tree, p.planes, row_view(x, i));
    EXPECT_TRUE(w.allFinite());
    EXPECT_NEAR(w.sum(), 1.0, 1e-12);
    EXPECT_GE(w.minCoeff(), 0.0);
  }
}

TEST(LeafWeightsProperty, SumToOneAtMillionPoints) {
  std::mt19937_64 rng(23);
  const HhkParams p = draw(8, 2, rng);
  const PointMatrix x = oracle::uniform_points(1000000, 2, rng);
  const HhkKernel k(p);
  const Eigen::MatrixXd w = k.weights(x);
  EXPECT_LT((w.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(Hhk, MatchesDirectSum) {
  std::mt19937_64 rng(24);
  for (std::size_t J : {1u, 2u, 4u, 8u}) {
    const HhkParams p = draw(J, 2, rng);
    const HhkKernel k(p);
    const PointMatrix x = oracle::uniform_points(20, 2, rng);
    const Eigen::MatrixXd g = k.gram(x);
    for (Eigen::Index a = 0; a < x.rows(); ++a) {
      for (Eigen::Index b = 0; b < x.rows(); ++b) {
        const double ref = oracle::hhk(p, row_view(x, a), row_view(x, b));
        EXPECT_NEAR(hhk_eval(p, row_view(x, a), row_view(x, b)), ref, 1e-14);
        EXPECT_NEAR(g(a, b), ref, 1e-14);
      }
      const Eigen::VectorXd c = k.cross(x, row_view(x, a));
      EXPECT_LT((c - g.col(a)).cwiseAbs().maxCoeff(), 1e-14);
      const Eigen::VectorXd cw = k.cross_with_weights(x, k.weights(x), row_view(x, a));
      EXPECT_LT((cw - g.col(a)).cwiseAbs().maxCoeff(), 1e-14);
    }
  }
}

TEST(Hhk, SpecialCases) {
  std::mt19937_64 rng(25);
  const HhkParams p1 = draw(1, 2, rng);
  const double x[] = {0.1, 0.4}, y[] = {0.7, 0.2};
  const double l[] = {p1.leaf_lengthscales(0, 0), p1.leaf_lengthscales(0, 1)};
  EXPECT_DOUBLE_EQ(hhk_eval(p1, x, y), rbf_eval(x, y, l, p1.leaf_variances(0)));

  const HhkParams p = draw(4, 2, rng);
  EXPECT_EQ(hhk_eval(p, x, y), hhk_eval(p, y, x));
  const Eigen::VectorXd w = oracle::weights(p, x);
  EXPECT_NEAR(hhk_eval(p, x, x), (w.array().square() * p.leaf_variances.array()).sum(), 1e-15);

  HhkParams same = p;
  for (Eigen::Index j = 0; j < 4; ++j) {
    same.leaf_lengthscales.row(j) = Eigen::RowVector2d(0.3, 0.5);
    same.leaf_variances(j) = 1.7;
  }
  const double l0[] = {0.3, 0.5};
  EXPECT_NEAR(hhk_eval(same, x, y), rbf_eval(x, y, l0, 1.7) * oracle::weights(same, x).dot(oracle::weights(same, y)),
              1e-15);
}

TEST(HhkProperty, GramIsPsd) {
  std::mt19937_64 rng(26);
  for (int rep = 0; rep < 30; ++rep) {
    const HhkParams p = draw(8, 3, rng);
    const Eigen::MatrixXd g = HhkKernel(p).gram(oracle::uniform_points(30, 3, rng));
    const Eigen::MatrixXd s = 0.5 * (g + g.transpose());
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s).eigenvalues().minCoeff(), -1e-8);
  }
}

TEST(HhkGradients, MatchFiniteDifferences) {
  std::mt19937_64 rng(27);
  for (std::size_t J : {1u, 2u, 4u, 8u}) {
    const ParameterLayout layout(TreeStructure::symmetric(J), 2);
    const HhkParams p = sample_prior(layout, PriorSpec{}, rng);
    const PointMatrix x = oracle::uniform_points(6, 2, rng);
    const auto dk = hhk_param_gradients(p, x);
    ASSERT_EQ(dk.size(), layout.kernel_size());
    const Eigen::VectorXd flat = layout.flatten(p);
    for (std::size_t k = 0; k < layout.kernel_size(); ++k) {
      EXPECT_LT((dk[k] - dk[k].transpose()).cwiseAbs().maxCoeff(), 1e-14);
      for (Eigen::Index a = 0; a < 6; ++a) {
        for (Eigen::Index b = 0; b < 6; ++b) {
          auto entry = [&](const Eigen::VectorXd& th) {
            return oracle::hhk(layout.unflatten(th), row_view(x, a), row_view(x, b));
          };
          Eigen::VectorXd up = flat, dn = flat;
          const auto kk = static_cast<Eigen::Index>(k);
          up(kk) += 1e-5;
          dn(kk) -= 1e-5;
          const double fd = (entry(up) - entry(dn)) / 2e-5;
          EXPECT_LT(std::abs(fd - dk[k](a, b)) / std::max(std::abs(fd), 1e-4), 1e-4)
              << layout.names()[k] << " (" << a << ',' << b << ')';
        }
      }
    }
  }
}

TEST(HhkGradients, ClosedFormEntries) {
  std::mt19937_64 rng(28);
  const ParameterLayout layout(TreeStructure::symmetric(4), 2);
  HhkParams p = sample_prior(layout, PriorSpec{}, rng);
  const PointMatrix x = oracle::uniform_points(5, 2, rng);
  auto dk = hhk_param_gradients(p, x);
  for (Eigen::Index a = 0; a < 5; ++a) {
    const Eigen::VectorXd w = oracle::weights(p, row_view(x, a));
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(dk[layout.variance_index(j)](a, a), w(static_cast<Eigen::Index>(j)) * w(static_cast<Eigen::Index>(j)), 1e-15);
  }
  p.planes.directions[1].setZero();
  dk = hhk_param_gradients(p, x);
  EXPECT_EQ(dk[layout.relevance_index(1)].cwiseAbs().maxCoeff(), 0.0);
}

TEST(HhkGradients, ContractionMatchesMaterialized) {
  std::mt19937_64 rng(29);
  for (std::size_t J : {1u, 2u, 8u}) {
    const HhkParams p = draw(J, 3, rng);
    const PointMatrix x = oracle::uniform_points(9, 3, rng);
    Eigen::MatrixXd w = Eigen::MatrixXd::Random(9, 9);
    w = (w + w.transpose()).eval();
    const auto dk = hhk_param_gradients(p, x);
    const Eigen::VectorXd c = hhk_gradient_contraction(p, x, w);
    ASSERT_EQ(static_cast<std::size_t>(c.size()), dk.size());
    for (std::size_t k = 0; k < dk.size(); ++k) {
      const double ref = (w.array() * dk[k].array()).sum();
      EXPECT_NEAR(c(static_cast<Eigen::Index>(k)), ref, 1e-11 * std::max(1.0, std::abs(ref)));
    }
  }
}

TEST(ChangeHyperplane, Examples) {
  const KernelHandle k1 = std::make_shared<RbfKernel>(Eigen::Vector2d(0.3, 0.3), 1.0);
  const KernelHandle k2 = std::make_shared<RbfKernel>(Eigen::Vector2d(0.9, 0.2), 2.0);
  const KernelHandle ch = change_hyperplane(k1, k2, Eigen::Vector3d::Zero());
  const double x[] = {0.2, 0.3}, y[] = {0.6, 0.1};
  EXPECT_NEAR(ch->eval(x, y), 0.25 * (k1->eval(x, y) + k2->eval(x, y)), 1e-16);

  const Eigen::Vector3d w(0.4, -1.3, 2.2);
  const KernelHandle same = change_hyperplane(k1, k1, w);
  std::mt19937_64 rng(30);
  const PointMatrix pts = oracle::uniform_points(100, 2, rng);
  for (Eigen::Index i = 0; i + 1 < pts.rows(); i += 2) {
    const PointView a = row_view(pts, i), b = row_view(pts, i + 1);
    const double sa = oracle::logistic(w(0) + w(1) * a[0] + w(2) * a[1]);
    const double sb = oracle::logistic(w(0) + w(1) * b[0] + w(2) * b[1]);
    const double k0 = k1->eval(a, b);
    EXPECT_NEAR(same->eval(a, b), (sa * sb + (1 - sa) * (1 - sb)) * k0, 1e-15);
    EXPECT_LE(same->eval(a, b), k0 + 1e-15);
  }
  EXPECT_THROW(change_hyperplane(k1, k2, Eigen::Vector2d::Zero()), DimensionMismatch);
}

TEST(ChangeHyperplane, RecursionEqualsHhk) {
  std::mt19937_64 rng(31);
  for (std::size_t J : {2u, 4u, 8u}) {
    const HhkParams p = draw(J, 2, rng);
    const KernelHandle ch = change_hyperplane_tree(p);
    const PointMatrix x = oracle::uniform_points(200, 2, rng);
    for (Eigen::Index i = 0; i + 1 < x.rows(); i += 2) {
      EXPECT_NEAR(ch->eval(row_view(x, i), row_view(x, i + 1)), hhk_eval(p, row_view(x, i), row_view(x, i + 1)),
                  1e-12);
    }
  }
  // Explicit three-plane composition for J = 4.
  const HhkParams p = draw(4, 2, rng);
  auto leaf = [&](Eigen::Index j) {
    return std::make_shared<RbfKernel>(p.leaf_lengthscales.row(j).transpose(), p.leaf_variances(j));
  };
  const KernelHandle manual = change_hyperplane(change_hyperplane(leaf(0), leaf(1), p.planes.effective(1)),
                                                change_hyperplane(leaf(2), leaf(3), p.planes.effective(2)),
                                                p.planes.effective(0));
  const double a[] = {0.13, 0.72}, b[] = {0.55, 0.4};
  EXPECT_NEAR(manual->eval(a, b), hhk_eval(p, a, b), 1e-12);
}

TEST(Sharp, RegionsAndBoundary) {
  HhkParams p = with_zero_planes(2, 1);
  p.planes.directions[0] = Eigen::Vector2d(0.0, 1.0);
  const SharpPartitionKernel k = sharp_limit_kernel(p);
  const double a[] = {0.3}, b[] = {-0.3}, on[] = {0.0};
  EXPECT_EQ(k.region(a), 0u);
  EXPECT_EQ(k.region(b), 1u);
  EXPECT_EQ(k.region(on), 0u);
  EXPECT_EQ(k.eval(a, b), 0.0);
  EXPECT_THROW(sharp_limit_kernel(with_zero_planes(2, 1)), DegenerateHyperplane);
}

TEST(Sharp, RegionsCoverDisjointly) {
  std::mt19937_64 rng(32);
  const HhkParams p = draw(8, 2, rng);
  const SharpPartitionKernel k = sharp_limit_kernel(p);
  const PointMatrix x = oracle::uniform_points(2000, 2, rng, -1.0, 2.0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    // Membership by brute force over all leaves' sign patterns.
    std::size_t hits = 0, found = 0;
    for (std::size_t j = 0; j < 8; ++j) {
      bool in = true;
      for (const auto& step : p.tree.path(j)) {
        const Eigen::VectorXd& w = p.planes.directions[step.node];
        const bool left = w(0) + w(1) * x(i, 0) + w(2) * x(i, 1) >= 0.0;
        in = in && (left == step.left);
      }
      if (in) {
        ++hits;
        found = j;
      }
    }
    ASSERT_EQ(hits, 1u);
    EXPECT_EQ(k.region(row_view(x, i)), found);
  }
}

TEST(Sharp, ScaledPlanesApproachPartition) {
  std::mt19937_64 rng(33);
  const HhkParams base = draw(4, 2, rng);
  const SharpPartitionKernel sharp = sharp_limit_kernel(base);
  const PointMatrix grid = oracle::uniform_points(400, 2, rng);
  // Off-boundary: every direction's margin at least 0.05.
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    bool ok = true;
    for (const auto& w : base.planes.directions) {
      ok = ok && std::abs(w(0) + w(1) * grid(i, 0) + w(2) * grid(i, 1)) >= 0.05;
    }
    if (ok) keep.push_back(i);
  }
  ASSERT_GT(keep.size(), 100u);
  double previous = INFINITY;
  for (double n : {10.0, 100.0, 1000.0}) {
    HhkParams p = base;
    for (std::size_t i = 0; i < p.planes.size(); ++i) {
      Eigen::VectorXd e1 = Eigen::VectorXd::Zero(3);
      e1(0) = 1.0 / n;
      p.planes.directions[i] = n * n * (base.planes.directions[i] + e1);
      p.planes.relevance[i] = 1.0;
    }
    double worst = 0.0;
    for (Eigen::Index a : keep) {
      for (Eigen::Index b : keep) {
        worst = std::max(worst, std::abs(hhk_eval(p, row_view(grid, a), row_view(grid, b)) -
                                         sharp.eval(row_view(grid, a), row_view(grid, b))));
      }
    }
    // Strict decrease until both values sit at rounding level.
    EXPECT_TRUE(worst < previous || worst <= 1e-14) << n << ": " << worst << " vs " << previous;
    previous = worst;
  }
  EXPECT_LT(previous, 1e-6);
}

TEST(Sharp, NonstationarityWitness) {
  HhkParams p = with_zero_planes(2, 1);
  p.planes.directions[0] = Eigen::Vector2d(0.5, -1.0);  // left iff x <= 0.5
  p.leaf_lengthscales.setConstant(0.3);
  p.leaf_variances << 1.0, 2.0;
  const double x[] = {0.1}, y[] = {0.2}, a[] = {0.6};
  EXPECT_TRUE(verify_nonstationary(p, x, y, a));
  p.leaf_variances << 1.5, 1.5;
  EXPECT_FALSE(verify_nonstationary(p, x, y, a));
  const double bad[] = {0.1};
  EXPECT_THROW(verify_nonstationary(p, x, y, bad), InvalidWitness);
  const HhkParams rbf = with_zero_planes(1, 1);
  EXPECT_FALSE(verify_nonstationary(rbf, x, y, a));
}
