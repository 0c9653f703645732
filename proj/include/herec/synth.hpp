#pragma once

// Synthetic hierarchical interaction data: users and items hang off the
// leaves of a latent b-ary tree and mostly interact inside their own leaf.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "herec/data.hpp"
#include "herec/error.hpp"

namespace herec {

struct SynthOptions {
  std::size_t users = 200;
  std::size_t items = 300;
  std::size_t branching = 2;
  double noise = 0.1;  // off-leaf interaction probability and semantic jitter
  std::uint64_t seed = 0;
  std::size_t min_per_user = 8;
  std::size_t max_per_user = 16;
  double popularity_sigma = 1.0;  // lognormal item weights
  std::size_t items_per_leaf = 20;
};

struct SynthDataset {
  std::size_t depth = 0;
  std::size_t leaf_count = 0;
  std::vector<std::size_t> user_leaf;
  std::vector<std::size_t> item_leaf;
  std::vector<std::pair<NodeIndex, NodeIndex>> interactions;  // sorted, distinct
  SemanticVectors semantic;
  DatasetManifest manifest;
};

namespace detail {

inline std::vector<std::size_t> balanced_leaves(std::size_t count, std::size_t leaves, std::mt19937_64& rng) {
  std::vector<std::size_t> slot(count);
  for (std::size_t k = 0; k < count; ++k) slot[k] = k % leaves;
  shuffle(slot, rng);
  return slot;
}

// One-hot of the child index at each level on the way to `leaf`.
inline std::vector<double> path_code(std::size_t leaf, std::size_t depth, std::size_t b) {
  std::vector<double> v(depth * b, 0.0);
  std::size_t span = 1;
  for (std::size_t d = 1; d < depth; ++d) span *= b;
  for (std::size_t d = 0; d < depth; ++d) {
    v[d * b + (leaf / span) % b] = 1.0;
    span = std::max<std::size_t>(span / b, 1);
  }
  return v;
}

}  // namespace detail

inline SynthDataset generate_synth(const SynthOptions& o) {
  if (o.users == 0 || o.items == 0) throw ParameterError("gen-synth: users and items must be positive");
  if (o.branching < 2) throw ParameterError("gen-synth: branching must be >= 2");
  if (!(o.noise >= 0.0 && o.noise <= 1.0)) throw ParameterError("gen-synth: noise must be in [0, 1]");
  if (o.min_per_user == 0 || o.max_per_user < o.min_per_user) throw ParameterError("gen-synth: bad per-user range");

  SynthDataset ds;
  const double ratio = static_cast<double>(o.items) / static_cast<double>(o.items_per_leaf);
  ds.depth = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(std::log(std::max(ratio, 1.0)) / std::log(static_cast<double>(o.branching)) - 1e-9)));
  ds.leaf_count = 1;
  for (std::size_t d = 0; d < ds.depth; ++d) ds.leaf_count *= o.branching;

  auto rng = detail::make_rng(o.seed, 0x5e7d);
  ds.user_leaf = detail::balanced_leaves(o.users, ds.leaf_count, rng);
  ds.item_leaf = detail::balanced_leaves(o.items, ds.leaf_count, rng);
  std::vector<double> pop(o.items);
  for (auto& p : pop) p = std::exp(o.popularity_sigma * detail::standard_normal(rng));

  // Items grouped per leaf; a subtree of height h covers b^h consecutive leaves.
  std::vector<std::vector<NodeIndex>> by_leaf(ds.leaf_count);
  for (NodeIndex i = 0; i < o.items; ++i) by_leaf[ds.item_leaf[i]].push_back(i);
  auto subtree_items = [&](std::size_t leaf, std::size_t height) {
    std::size_t span = 1;
    for (std::size_t h = 0; h < height; ++h) span *= o.branching;
    const std::size_t first = leaf / span * span;
    std::vector<NodeIndex> out;
    for (std::size_t l = first; l < first + span; ++l) out.insert(out.end(), by_leaf[l].begin(), by_leaf[l].end());
    return out;
  };
  auto pick = [&](const std::vector<NodeIndex>& cand) {
    double total = 0.0;
    for (auto i : cand) total += pop[i];
    double r = detail::uniform01(rng) * total;
    for (auto i : cand) {
      r -= pop[i];
      if (r < 0.0) return i;
    }
    return cand.back();
  };

  for (NodeIndex u = 0; u < o.users; ++u) {
    const std::size_t want =
        o.min_per_user + detail::uniform_index(rng, o.max_per_user - o.min_per_user + 1);
    std::vector<NodeIndex> chosen;
    for (std::size_t attempt = 0; chosen.size() < want && attempt < 50 * want; ++attempt) {
      std::size_t height = 0;
      if (detail::uniform01(rng) < o.noise) {
        height = 1;
        while (height < ds.depth && detail::uniform01(rng) < 0.5) ++height;
      }
      const auto cand = subtree_items(ds.user_leaf[u], height);
      if (cand.empty()) continue;
      const NodeIndex i = pick(cand);
      if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) chosen.push_back(i);
    }
    std::sort(chosen.begin(), chosen.end());
    for (auto i : chosen) ds.interactions.emplace_back(u, i);
  }

  const std::size_t sdim = ds.depth * o.branching;
  ds.semantic.dim = sdim;
  auto jitter = [&](std::vector<double> v) {
    for (auto& x : v) x += o.noise * detail::standard_normal(rng);
    return v;
  };
  for (NodeIndex u = 0; u < o.users; ++u) {
    ds.semantic.rows.emplace(NodeId{NodeKind::User, u}, jitter(detail::path_code(ds.user_leaf[u], ds.depth, o.branching)));
  }
  for (NodeIndex i = 0; i < o.items; ++i) {
    ds.semantic.rows.emplace(NodeId{NodeKind::Item, i}, jitter(detail::path_code(ds.item_leaf[i], ds.depth, o.branching)));
  }

  ds.manifest.user_count = o.users;
  ds.manifest.item_count = o.items;
  ds.manifest.interactions = ds.interactions.size();
  ds.manifest.extra["generator"] = "gen-synth";
  ds.manifest.extra["branching"] = std::to_string(o.branching);
  ds.manifest.extra["depth"] = std::to_string(ds.depth);
  std::ostringstream noise;
  noise << o.noise;
  ds.manifest.extra["noise"] = noise.str();
  ds.manifest.extra["seed"] = std::to_string(o.seed);
  return ds;
}

inline void write_interactions(std::ostream& os, std::span<const std::pair<NodeIndex, NodeIndex>> pairs) {
  os << "# user\titem\n";
  for (auto [u, i] : pairs) os << u << '\t' << i << '\n';
}

inline void write_semantic_vectors(std::ostream& os, const SemanticVectors& sv) {
  os << std::setprecision(9);
  for (const auto& [node, values] : sv.rows) {
    os << (node.kind == NodeKind::User ? 'u' : 'i') << '\t' << node.id << '\t';
    for (std::size_t k = 0; k < values.size(); ++k) os << (k ? "," : "") << values[k];
    os << '\n';
  }
}

struct SynthPaths {
  std::string interactions;
  std::string semantic;
  std::string manifest;
};

inline SynthPaths synth_paths(const std::string& dir) {
  const std::filesystem::path d(dir);
  return {(d / "interactions.tsv").string(), (d / "semantic.tsv").string(), (d / "manifest.txt").string()};
}

inline SynthPaths write_synth(const std::string& dir, const SynthDataset& ds) {
  std::filesystem::create_directories(dir);
  const auto p = synth_paths(dir);
  auto open = [](const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error("cannot write " + path);
    return os;
  };
  auto a = open(p.interactions);
  write_interactions(a, ds.interactions);
  auto b = open(p.semantic);
  write_semantic_vectors(b, ds.semantic);
  auto c = open(p.manifest);
  write_manifest(c, ds.manifest);
  return p;
}

}  // namespace herec
