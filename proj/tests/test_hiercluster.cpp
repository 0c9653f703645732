#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "herec/error.hpp"
#include "herec/hiercluster.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace herec;
using namespace herec::testing;

TEST(KMeans, IdenticalPointsOneCluster) {
  const auto p = exp_origin(std::vector<double>{0.3, -0.4});
  const std::vector<LorentzPoint> pts{p, p};
  const auto res = hyperbolic_kmeans(pts, 1, 0);
  ASSERT_EQ(res.centroids.size(), 1u);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(res.centroids[0].coords()[k], p.coords()[k], 1e-12);
}

TEST(KMeans, SeparatedPairsRecoveredForAnySeed) {
  const std::vector<LorentzPoint> pts{exp_origin(std::vector<double>{2.0, 0.0}),
                                      exp_origin(std::vector<double>{2.1, 0.1}),
                                      exp_origin(std::vector<double>{-2.0, 0.0}),
                                      exp_origin(std::vector<double>{-2.1, -0.1})};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto res = hyperbolic_kmeans(pts, 2, seed);
    EXPECT_EQ(res.assignment[0], res.assignment[1]);
    EXPECT_EQ(res.assignment[2], res.assignment[3]);
    EXPECT_NE(res.assignment[0], res.assignment[2]);
  }
}

TEST(KMeans, OneClusterPerPoint) {
  std::mt19937_64 r(1);
  std::vector<LorentzPoint> pts;
  for (int k = 0; k < 6; ++k) pts.push_back(random_point(r, 3, 0.5, 2.0));
  const auto res = hyperbolic_kmeans(pts, 6, 4);
  EXPECT_EQ(res.changed_passes, 0u);
  std::set<std::size_t> used(res.assignment.begin(), res.assignment.end());
  EXPECT_EQ(used.size(), 6u);
  for (std::size_t p = 0; p < 6; ++p) EXPECT_LT(dist(pts[p], res.centroids[res.assignment[p]]), 1e-9);
}

TEST(KMeans, TooManyClustersReducedWithWarning) {
  const std::vector<LorentzPoint> pts{origin(2), exp_origin(std::vector<double>{1.0, 0.0})};
  const auto res = hyperbolic_kmeans(pts, 5, 0);
  EXPECT_EQ(res.centroids.size(), 2u);
  ASSERT_EQ(res.warnings.size(), 1u);
  EXPECT_THROW(hyperbolic_kmeans(pts, 0, 0), ParameterError);
}

TEST(KMeans, LorentzianObjectiveNonIncreasing) {
  // Re-running with a growing iteration cap replays the same trajectory.
  std::mt19937_64 r(2);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<LorentzPoint> pts;
    for (int k = 0; k < 40; ++k) pts.push_back(random_point(r, 3, 0.2, 3.0));
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t cap = 1; cap <= 15; ++cap) {
      const auto res = hyperbolic_kmeans(pts, 5, trial, KMeansOptions{cap, 0.0});
      double obj = 0.0;
      for (std::size_t p = 0; p < pts.size(); ++p) {
        obj += -2.0 - 2.0 * lorentz_inner(pts[p].coords(), res.centroids[res.assignment[p]].coords());
      }
      EXPECT_LE(obj, prev + 1e-9) << "trial " << trial << " cap " << cap;
      prev = obj;
    }
  }
}

TEST(BuildHierarchy, FourLeavesGiveSizesFourTwoOne) {
  std::mt19937_64 r(3);
  std::vector<LorentzPoint> pts;
  for (int k = 0; k < 4; ++k) pts.push_back(random_point(r, 2, 0.5, 2.0));
  const auto t = build_hierarchy(pts, 2, 0);
  EXPECT_EQ(t.leaf_layer, 2u);
  EXPECT_EQ(t.layer(2).size(), 4u);
  EXPECT_EQ(t.layer(1).size(), 2u);
  EXPECT_EQ(t.layer(0).size(), 1u);
}

TEST(BuildHierarchy, TwoLeavesOneInternalNode) {
  const std::vector<LorentzPoint> pts{origin(2), exp_origin(std::vector<double>{1.0, 0.0})};
  const auto t = build_hierarchy(pts, 1, 0);
  EXPECT_EQ(t.leaf_layer, 1u);
  EXPECT_EQ(t.top_layer, 0u);
  EXPECT_EQ(t.layer(0).size(), 1u);
  EXPECT_EQ(t.layer(0)[0].children.size(), 2u);
  EXPECT_THROW(build_hierarchy(std::vector<LorentzPoint>{origin(2)}, 1, 0), ParameterError);
}

TEST(BuildHierarchy, LayerSizeLawAndPartition) {
  std::mt19937_64 r(4);
  for (std::size_t n : {3u, 5u, 17u, 64u, 100u}) {
    std::vector<LorentzPoint> pts;
    for (std::size_t k = 0; k < n; ++k) pts.push_back(random_point(r, 3, 0.2, 3.0));
    const auto t = build_hierarchy(pts, n / 3, 7);
    EXPECT_EQ(t.leaf_layer, static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(n)))));
    for (std::size_t l = t.leaf_layer; l > t.top_layer; --l) {
      EXPECT_EQ(t.layer(l - 1).size(), std::max<std::size_t>(1, t.layer(l).size() / 2)) << "n " << n << " l " << l;
    }
    EXPECT_EQ(t.layer(t.top_layer).size(), 1u);
    EXPECT_EQ(t.layer(t.top_layer)[0].leaf_count, n);
    for (std::size_t leaf = 0; leaf < n; ++leaf) EXPECT_EQ(t.ancestor(leaf, t.top_layer), 0u);
  }
}

TEST(BuildHierarchy, PlantedClustersSplitBelowRoot) {
  std::mt19937_64 r(5);
  const auto pts = planted_points(r, 16, 3);
  const auto t = build_hierarchy(pts, 0, 11);
  // The two children of the root hold one planted cluster each.
  const auto& root = t.layer(t.top_layer)[0];
  ASSERT_EQ(root.children.size(), 2u);
  for (std::size_t leaf = 0; leaf < 32; ++leaf) {
    EXPECT_EQ(t.ancestor(leaf, t.top_layer + 1), t.ancestor(leaf < 16 ? 0 : 16, t.top_layer + 1));
  }
  EXPECT_NE(t.ancestor(0, t.top_layer + 1), t.ancestor(16, t.top_layer + 1));
}

TEST(BuildHierarchy, DeterministicForSeed) {
  std::mt19937_64 r(6);
  std::vector<LorentzPoint> pts;
  for (int k = 0; k < 30; ++k) pts.push_back(random_point(r, 3, 0.2, 3.0));
  EXPECT_EQ(tree_to_json(build_hierarchy(pts, 10, 3)).dump(), tree_to_json(build_hierarchy(pts, 10, 3)).dump());
}

TEST(Lca, Examples) {
  // Leaves 0..3, pairs (0,1)(2,3), root at layer 0.
  const auto t = layered_tree(4, {{0, 0, 1, 1}, {0, 0}});
  EXPECT_EQ(lca_layer(t, 2, 2), 2u);
  EXPECT_EQ(lca_layer(t, 0, 1), 1u);
  EXPECT_EQ(lca_layer(t, 0, 3), 0u);
  EXPECT_THROW(lca_layer(t, 0, 4), LookupError);
}

TEST(Lca, RootAtLayerOneWhenLeavesNotPowerOfTwo) {
  std::mt19937_64 r(7);
  std::vector<LorentzPoint> pts;
  for (int k = 0; k < 5; ++k) pts.push_back(random_point(r, 2, 0.5, 2.0));
  const auto t = build_hierarchy(pts, 2, 1);
  EXPECT_EQ(t.top_layer, 1u);
  std::size_t shallowest = t.leaf_layer;
  for (std::size_t a = 0; a < 5; ++a)
    for (std::size_t b = 0; b < 5; ++b) shallowest = std::min(shallowest, lca_layer(t, a, b));
  EXPECT_EQ(shallowest, 1u);
}

TEST(Dasgupta, NoEdgesIsZero) {
  const auto t = layered_tree(4, {{0, 0, 1, 1}, {0, 0}});
  EXPECT_EQ(dasgupta_cost(t, Edges{}), 0.0);
}

TEST(Dasgupta, SiblingEdgeCostsTwo) {
  const auto t = layered_tree(4, {{0, 0, 1, 1}, {0, 0}});
  EXPECT_EQ(dasgupta_cost(t, Edges{{2, 3}}), 2.0);
}

TEST(Dasgupta, FourLeafBruteForce) {
  const Edges edges{{0, 1}, {2, 3}};
  const auto trees = all_binary_trees({0, 1, 2, 3});
  ASSERT_EQ(trees.size(), 15u);
  double best = 1e9;
  for (const auto& [nodes, root] : trees) best = std::min(best, oracle_cost(nodes, root, edges));
  EXPECT_EQ(best, 4.0);
  const auto paired = layered_tree(4, {{0, 0, 1, 1}, {0, 0}});
  const auto crossed = layered_tree(4, {{0, 1, 0, 1}, {0, 0}});
  EXPECT_EQ(dasgupta_cost(paired, edges), 4.0);
  EXPECT_EQ(dasgupta_cost(crossed, edges), 8.0);
}

TEST(Dasgupta, MatchesOracleOnRandomEdges) {
  std::mt19937_64 r(8);
  const auto t = layered_tree(8, {{0, 0, 1, 1, 2, 2, 3, 3}, {0, 0, 1, 1}, {0, 0}});
  // Same shape as nested nodes for the oracle.
  std::vector<BNode> nodes;
  for (int k = 0; k < 8; ++k) nodes.push_back(BNode{k, -1, -1, -1});
  for (int k = 0; k < 4; ++k) nodes.push_back(BNode{-1, 2 * k, 2 * k + 1, -1});
  for (int k = 0; k < 2; ++k) nodes.push_back(BNode{-1, 8 + 2 * k, 9 + 2 * k, -1});
  nodes.push_back(BNode{-1, 12, 13, -1});
  Edges edges;
  for (int k = 0; k < 12; ++k) edges.emplace_back(r() % 8, r() % 8);
  EXPECT_EQ(dasgupta_cost(t, edges), oracle_cost(nodes, 14, edges));
}

TEST(Dasgupta, PlantedTreeBeatsRandomBinaryTrees) {
  std::mt19937_64 r(9);
  const auto pts = planted_points(r, 32, 3);
  Edges edges;
  for (std::size_t a = 0; a < 64; ++a) {
    for (std::size_t b = a + 1; b < 64; ++b) {
      if ((a < 32) == (b < 32) && herec::testing::uniform(r, 0, 1) < 0.3) edges.emplace_back(a, b);
    }
  }
  const auto t = build_hierarchy(pts, 0, 2);
  const double built = dasgupta_cost(t, edges);
  double mean = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto [nodes, root] = random_binary_tree(64, r);
    mean += oracle_cost(nodes, root, edges) / 100.0;
  }
  EXPECT_LE(built, mean);
}

TEST(Dasgupta, GraphOverloadUsesTrainEdges) {
  InteractionGraph g;
  g.user_count = 2;
  g.item_count = 2;
  g.train = {{0}, {1}};
  g.test = {{}, {}};
  g.rebuild_transpose();
  // Leaves: u0, u1, i0, i1. Pair (u0,i0) and (u1,i1).
  const auto t = layered_tree(4, {{0, 1, 0, 1}, {0, 0}});
  HierarchyTree t2 = t;
  t2.user_count = 2;
  t2.item_count = 2;
  EXPECT_EQ(dasgupta_cost(t2, g), 4.0);
}

TEST(TreeJson, RoundTrip) {
  std::mt19937_64 r(10);
  std::vector<LorentzPoint> pts;
  for (int k = 0; k < 11; ++k) pts.push_back(random_point(r, 3, 0.2, 3.0));
  const auto t = build_hierarchy(pts, 4, 5);
  const auto j = tree_to_json(t);
  const auto back = tree_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(tree_to_json(back).dump(), j.dump());
  EXPECT_EQ(j["leaves"][4]["kind"], "i");
  EXPECT_EQ(j["leaves"][4]["id"], 0);
}

TEST(TreeJson, RejectsBrokenStructure) {
  const auto j = tree_to_json(layered_tree(4, {{0, 0, 1, 1}, {0, 0}}));
  auto bad = nlohmann::json::parse(j.dump());
  bad["layers"][2]["nodes"][0]["parent"] = 5;
  EXPECT_THROW(tree_from_json(bad), FormatError);
  auto missing = nlohmann::json::parse(j.dump());
  missing.erase("leaf_layer");
  EXPECT_THROW(tree_from_json(missing), FormatError);
}

TEST(LayerNorms, OnePerLayer) {
  const auto t = layered_tree(4, {{0, 0, 1, 1}, {0, 0}});
  const auto m = layer_mean_origin_distance(t);
  ASSERT_EQ(m.size(), 3u);
  for (double v : m) EXPECT_EQ(v, 0.0);
}
