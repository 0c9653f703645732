#pragma once

// Bottom-up hyperbolic hierarchical clustering.
//
// Layers are numbered as in the clustering recursion: the leaf layer is
// L = ceil(log2 |X|), and each clustering round produces layer l-1 from layer
// l with max(1, floor(|D_l| / 2)) centroids. Construction stops at the first
// single-node layer, so the root sits at layer 1, or at layer 0 when |X| is
// an exact power of two.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "herec/data.hpp"
#include "herec/error.hpp"
#include "herec/manifold.hpp"
#include "herec/model.hpp"

namespace herec {

inline constexpr std::size_t kLayerProportion = 2;

struct KMeansOptions {
  std::size_t max_iter = 100;
  double tol = 1e-5;  // max centroid movement (hyperbolic distance)
};

struct KMeansResult {
  std::vector<LorentzPoint> centroids;
  std::vector<std::size_t> assignment;
  std::size_t iterations = 0;       // assignment passes performed
  std::size_t changed_passes = 0;   // passes after the first that moved any point
  std::vector<double> objective;    // sum of squared distances after each update
  std::vector<std::string> warnings;
};

namespace detail {

inline std::size_t nearest(std::span<const LorentzPoint> centroids, ConstSpan p, double* best_dist = nullptr) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = dist(p, centroids[c].coords(), centroids[c].kappa());
    if (d < bd) {
      bd = d;
      best = c;
    }
  }
  if (best_dist) *best_dist = bd;
  return best;
}

}  // namespace detail

/// Lloyd iterations with nearest-centroid assignment under d_H and
/// Lorentzian-centroid updates. Initial centroids are distinct input points
/// chosen by a seeded shuffle.
inline KMeansResult hyperbolic_kmeans(std::span<const LorentzPoint> points, std::size_t cluster_count,
                                      std::uint64_t seed, const KMeansOptions& opt = {}) {
  if (points.empty()) throw ParameterError("hyperbolic_kmeans: no points");
  if (cluster_count == 0) throw ParameterError("hyperbolic_kmeans: cluster_count must be >= 1");
  KMeansResult res;
  if (cluster_count > points.size()) {
    res.warnings.push_back("cluster_count " + std::to_string(cluster_count) + " reduced to point count " +
                           std::to_string(points.size()));
    cluster_count = points.size();
  }
  const std::size_t np = points.size();
  std::vector<std::size_t> order(np);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = detail::make_rng(seed, 0xc1);
  for (std::size_t i = 0; i < cluster_count; ++i) {
    std::swap(order[i], order[i + detail::uniform_index(rng, np - i)]);
    res.centroids.push_back(points[order[i]]);
  }
  res.assignment.assign(np, std::numeric_limits<std::size_t>::max());
  std::vector<double> to_centroid(np, 0.0);

  for (std::size_t iter = 0; iter < opt.max_iter; ++iter) {
    bool changed = false;
    for (std::size_t p = 0; p < np; ++p) {
      const auto c = detail::nearest(res.centroids, points[p].coords(), &to_centroid[p]);
      changed = changed || c != res.assignment[p];
      res.assignment[p] = c;
    }
    ++res.iterations;
    if (iter > 0 && changed) ++res.changed_passes;

    std::vector<std::size_t> sizes(cluster_count, 0);
    for (auto c : res.assignment) ++sizes[c];
    for (std::size_t c = 0; c < cluster_count; ++c) {
      if (sizes[c] != 0) continue;
      // Re-seed with the point farthest from its centroid among clusters that can spare one.
      std::size_t far = np;
      for (std::size_t p = 0; p < np; ++p) {
        if (sizes[res.assignment[p]] < 2) continue;
        if (far == np || to_centroid[p] > to_centroid[far]) far = p;
      }
      if (far == np) break;
      --sizes[res.assignment[far]];
      res.assignment[far] = c;
      sizes[c] = 1;
      to_centroid[far] = 0.0;
      changed = true;
    }

    std::vector<std::vector<LorentzPoint>> members(cluster_count);
    for (std::size_t p = 0; p < np; ++p) members[res.assignment[p]].push_back(points[p]);
    double movement = 0.0;
    for (std::size_t c = 0; c < cluster_count; ++c) {
      if (members[c].empty()) continue;
      auto next = lorentz_centroid(members[c]);
      movement = std::max(movement, dist(next, res.centroids[c]));
      res.centroids[c] = std::move(next);
    }
    double obj = 0.0;
    for (std::size_t p = 0; p < np; ++p) {
      const double d = dist(points[p], res.centroids[res.assignment[p]]);
      obj += d * d;
    }
    res.objective.push_back(obj);
    if ((iter > 0 && !changed) || movement < opt.tol) break;
  }
  return res;
}

struct TreeNode {
  LorentzPoint centroid;
  std::int64_t parent = -1;  // index in the layer above; -1 at the root
  std::vector<std::size_t> children;
  std::size_t leaf_count = 0;
};

/// Layered tree; layers[l] is empty for l < top_layer.
struct HierarchyTree {
  std::size_t leaf_layer = 0;
  std::size_t top_layer = 0;
  std::size_t user_count = 0;  // leaves [0, user_count) are users, the rest items
  std::size_t item_count = 0;
  std::vector<std::vector<TreeNode>> layers;

  std::size_t leaf_total() const { return layers.empty() ? 0 : layers[leaf_layer].size(); }
  std::size_t item_leaf(NodeIndex item) const { return user_count + item; }

  const std::vector<TreeNode>& layer(std::size_t l) const {
    if (l < top_layer || l > leaf_layer) throw LookupError("tree: layer " + std::to_string(l) + " out of range");
    return layers[l];
  }

  void check_leaf(std::size_t leaf) const {
    if (leaf >= leaf_total()) throw LookupError("tree: unknown leaf " + std::to_string(leaf));
  }

  /// Index of the leaf's ancestor at `target_layer` (the leaf itself at L).
  std::size_t ancestor(std::size_t leaf, std::size_t target_layer) const {
    check_leaf(leaf);
    if (target_layer < top_layer || target_layer > leaf_layer) {
      throw ParameterError("tree: layer " + std::to_string(target_layer) + " outside [" +
                           std::to_string(top_layer) + ", " + std::to_string(leaf_layer) + "]");
    }
    std::size_t idx = leaf;
    for (std::size_t l = leaf_layer; l > target_layer; --l) idx = static_cast<std::size_t>(layers[l][idx].parent);
    return idx;
  }

  /// Leaf indices under node (layer, idx), ascending.
  std::vector<std::size_t> leaves_under(std::size_t l, std::size_t idx) const {
    std::vector<std::size_t> frontier{idx}, next;
    for (std::size_t cur = l; cur < leaf_layer; ++cur) {
      next.clear();
      for (auto n : frontier) {
        const auto& ch = layers[cur][n].children;
        next.insert(next.end(), ch.begin(), ch.end());
      }
      frontier.swap(next);
    }
    std::sort(frontier.begin(), frontier.end());
    return frontier;
  }

  // Fills leaf_count bottom-up and checks the parent/child structure.
  void finalize() {
    if (layers.size() != leaf_layer + 1) throw FormatError("tree: layer vector size mismatch");
    for (auto& n : layers[leaf_layer]) n.leaf_count = 1;
    for (std::size_t l = leaf_layer; l > top_layer; --l) {
      auto& above = layers[l - 1];
      for (auto& p : above) p.leaf_count = 0;
      std::vector<std::size_t> seen(above.size(), 0);
      for (std::size_t c = 0; c < layers[l].size(); ++c) {
        const auto p = layers[l][c].parent;
        if (p < 0 || static_cast<std::size_t>(p) >= above.size()) throw FormatError("tree: bad parent link");
        above[static_cast<std::size_t>(p)].leaf_count += layers[l][c].leaf_count;
        ++seen[static_cast<std::size_t>(p)];
      }
      for (std::size_t p = 0; p < above.size(); ++p) {
        if (seen[p] != above[p].children.size() || seen[p] == 0) throw FormatError("tree: children do not partition layer");
        for (auto c : above[p].children) {
          if (c >= layers[l].size() || layers[l][c].parent != static_cast<std::int64_t>(p)) {
            throw FormatError("tree: child/parent mismatch");
          }
        }
      }
    }
    if (layers[top_layer].size() != 1) throw FormatError("tree: top layer must hold exactly one node");
  }
};

/// Clusters `points` (users then items) into a layered tree.
inline HierarchyTree build_hierarchy(std::span<const LorentzPoint> points, std::size_t user_count,
                                     std::uint64_t seed, const KMeansOptions& opt = {},
                                     std::vector<std::string>* warnings = nullptr) {
  if (points.size() < 2) throw ParameterError("build_hierarchy: need at least 2 leaves");
  HierarchyTree t;
  t.user_count = user_count;
  t.item_count = points.size() - user_count;
  t.leaf_layer = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(points.size())) - 1e-12));
  t.layers.assign(t.leaf_layer + 1, {});
  for (const auto& p : points) t.layers[t.leaf_layer].push_back(TreeNode{p, -1, {}, 1});

  std::size_t l = t.leaf_layer;
  while (l >= 1 && t.layers[l].size() > 1) {
    std::vector<LorentzPoint> current;
    current.reserve(t.layers[l].size());
    for (const auto& n : t.layers[l]) current.push_back(n.centroid);
    const std::size_t clusters = std::max<std::size_t>(1, current.size() / kLayerProportion);
    auto km = hyperbolic_kmeans(current, clusters, detail::splitmix64(seed + l), opt);
    if (warnings) warnings->insert(warnings->end(), km.warnings.begin(), km.warnings.end());
    auto& above = t.layers[l - 1];
    for (auto& c : km.centroids) above.push_back(TreeNode{std::move(c), -1, {}, 0});
    for (std::size_t i = 0; i < current.size(); ++i) {
      t.layers[l][i].parent = static_cast<std::int64_t>(km.assignment[i]);
      above[km.assignment[i]].children.push_back(i);
    }
    --l;
  }
  t.top_layer = l;
  t.finalize();
  return t;
}

inline HierarchyTree build_hierarchy(const EmbeddingTable& table, std::uint64_t seed, const KMeansOptions& opt = {},
                                     std::vector<std::string>* warnings = nullptr) {
  std::vector<LorentzPoint> pts;
  pts.reserve(table.rows());
  for (std::size_t r = 0; r < table.rows(); ++r) pts.push_back(table.point(r));
  return build_hierarchy(pts, table.user_count(), seed, opt, warnings);
}

/// Layer of the deepest common ancestor; L for a leaf with itself.
inline std::size_t lca_layer(const HierarchyTree& t, std::size_t leaf_a, std::size_t leaf_b) {
  t.check_leaf(leaf_a);
  t.check_leaf(leaf_b);
  std::size_t a = leaf_a, b = leaf_b, l = t.leaf_layer;
  while (a != b) {
    if (l == t.top_layer) throw FormatError("tree: leaves do not share a root");
    a = static_cast<std::size_t>(t.layers[l][a].parent);
    b = static_cast<std::size_t>(t.layers[l][b].parent);
    --l;
  }
  return l;
}

// Number of leaves under the lowest common ancestor of two leaves.
inline std::size_t lca_leaf_count(const HierarchyTree& t, std::size_t leaf_a, std::size_t leaf_b) {
  const auto l = lca_layer(t, leaf_a, leaf_b);
  return t.layers[l][t.ancestor(leaf_a, l)].leaf_count;
}

/// Dasgupta cost with unit weights: sum over edges of |leaves(LCA(a, b))|.
inline double dasgupta_cost(const HierarchyTree& t, std::span<const std::pair<std::size_t, std::size_t>> edges) {
  double cost = 0.0;
  for (auto [a, b] : edges) cost += static_cast<double>(lca_leaf_count(t, a, b));
  return cost;
}

/// Same over the train interactions of `g` (user leaf u, item leaf U + i).
inline double dasgupta_cost(const HierarchyTree& t, const InteractionGraph& g) {
  if (t.user_count != g.user_count || t.item_count != g.item_count) {
    throw DimensionError("dasgupta_cost: tree leaves do not cover the graph");
  }
  double cost = 0.0;
  for (NodeIndex u = 0; u < g.user_count; ++u) {
    for (NodeIndex i : g.train[u]) cost += static_cast<double>(lca_leaf_count(t, u, t.item_leaf(i)));
  }
  return cost;
}

/// Mean d_H(centroid, o) per layer, from top_layer to leaf_layer.
inline std::vector<double> layer_mean_origin_distance(const HierarchyTree& t) {
  std::vector<double> out;
  for (std::size_t l = t.top_layer; l <= t.leaf_layer; ++l) {
    double s = 0.0;
    for (const auto& n : t.layers[l]) s += dist_to_origin(n.centroid.coords(), n.centroid.kappa());
    out.push_back(s / static_cast<double>(t.layers[l].size()));
  }
  return out;
}

// ---- JSON ----------------------------------------------------------------

inline nlohmann::ordered_json tree_to_json(const HierarchyTree& t) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["k"] = kLayerProportion;
  j["leaf_layer"] = t.leaf_layer;
  j["top_layer"] = t.top_layer;
  j["user_count"] = t.user_count;
  j["item_count"] = t.item_count;
  j["kappa"] = t.layers.empty() || t.layers[t.leaf_layer].empty() ? 1.0
                                                                  : t.layers[t.leaf_layer][0].centroid.kappa();
  ordered_json layers = ordered_json::array();
  for (std::size_t l = t.top_layer; l <= t.leaf_layer; ++l) {
    ordered_json lj;
    lj["layer"] = l;
    ordered_json nodes = ordered_json::array();
    for (std::size_t i = 0; i < t.layers[l].size(); ++i) {
      const auto& n = t.layers[l][i];
      ordered_json nj;
      nj["id"] = i;
      nj["parent"] = n.parent;
      nj["children"] = n.children;
      auto c = n.centroid.coords();
      nj["centroid"] = std::vector<double>(c.begin(), c.end());
      nodes.push_back(std::move(nj));
    }
    lj["nodes"] = std::move(nodes);
    layers.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers);
  ordered_json leaves = ordered_json::array();
  for (std::size_t r = 0; r < t.leaf_total(); ++r) {
    ordered_json lj;
    lj["leaf"] = r;
    const bool user = r < t.user_count;
    lj["kind"] = user ? "u" : "i";
    lj["id"] = user ? r : r - t.user_count;
    leaves.push_back(std::move(lj));
  }
  j["leaves"] = std::move(leaves);
  return j;
}

inline HierarchyTree tree_from_json(const nlohmann::json& j) {
  try {
    HierarchyTree t;
    t.leaf_layer = j.at("leaf_layer").get<std::size_t>();
    t.top_layer = j.at("top_layer").get<std::size_t>();
    t.user_count = j.at("user_count").get<std::size_t>();
    t.item_count = j.at("item_count").get<std::size_t>();
    const double kappa = j.value("kappa", 1.0);
    if (t.top_layer > t.leaf_layer) throw FormatError("tree json: top_layer above leaf_layer");
    t.layers.assign(t.leaf_layer + 1, {});
    for (const auto& lj : j.at("layers")) {
      const auto l = lj.at("layer").get<std::size_t>();
      if (l > t.leaf_layer) throw FormatError("tree json: layer out of range");
      for (const auto& nj : lj.at("nodes")) {
        TreeNode n;
        n.centroid = LorentzPoint(nj.at("centroid").get<std::vector<double>>(), kappa);
        n.parent = nj.at("parent").get<std::int64_t>();
        n.children = nj.at("children").get<std::vector<std::size_t>>();
        t.layers[l].push_back(std::move(n));
      }
    }
    if (t.layers[t.leaf_layer].size() != t.user_count + t.item_count) {
      throw FormatError("tree json: leaf count does not match user_count + item_count");
    }
    t.finalize();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("tree json: ") + e.what());
  }
}

}  // namespace herec
