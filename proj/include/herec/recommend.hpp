#pragma once

// Top-k retrieval and the (tau, l) exploration-exploitation policy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "herec/data.hpp"
#include "herec/error.hpp"
#include "herec/hiercluster.hpp"
#include "herec/model.hpp"

namespace herec {

enum class Provenance : std::uint8_t { Retained, Explored };

inline const char* to_string(Provenance p) { return p == Provenance::Retained ? "retained" : "explored"; }

struct RecommendedItem {
  NodeIndex item = 0;
  double score = 0.0;  // p(u, i)
  Provenance provenance = Provenance::Retained;
  friend bool operator==(const RecommendedItem&, const RecommendedItem&) = default;
};

struct RecommendationList {
  NodeIndex user = 0;
  std::vector<RecommendedItem> items;

  std::vector<NodeIndex> item_ids() const {
    std::vector<NodeIndex> ids;
    ids.reserve(items.size());
    for (const auto& r : items) ids.push_back(r.item);
    return ids;
  }
  friend bool operator==(const RecommendationList&, const RecommendationList&) = default;
};

namespace detail {

inline void check_user(const InteractionGraph& g, NodeIndex user) {
  if (user >= g.user_count) throw LookupError("unknown user " + std::to_string(user));
}

}  // namespace detail

/// Items outside the user's train set ranked by descending p(u,i) (ascending
/// distance), ties to the lower item id. Fewer than k candidates truncates.
inline RecommendationList top_k(const EmbeddingTable& h, const InteractionGraph& g, NodeIndex user, std::size_t k) {
  detail::check_user(g, user);
  detail::check_graph_matches(h, g);
  struct Cand {
    double d;
    NodeIndex item;
  };
  std::vector<Cand> cands;
  cands.reserve(g.item_count);
  const auto hu = h.user(user);
  for (NodeIndex i = 0; i < g.item_count; ++i) {
    if (g.in_train(user, i)) continue;
    cands.push_back({dist(hu, h.item(i), h.kappa()), i});
  }
  const std::size_t take = std::min(k, cands.size());
  auto less = [](const Cand& a, const Cand& b) { return a.d < b.d || (a.d == b.d && a.item < b.item); };
  std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(take), cands.end(), less);
  RecommendationList out{user, {}};
  for (std::size_t r = 0; r < take; ++r) {
    out.items.push_back({cands[r].item, 1.0 / (cands[r].d + kPredictEpsilon), Provenance::Retained});
  }
  return out;
}

/// Baseline: most train interactions first (ties by id), excluding the
/// user's train items. Score is the train count.
inline RecommendationList most_popular(const InteractionGraph& g, NodeIndex user, std::size_t k) {
  detail::check_user(g, user);
  std::vector<NodeIndex> order;
  for (NodeIndex i = 0; i < g.item_count; ++i) {
    if (!g.in_train(user, i)) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](NodeIndex a, NodeIndex b) { return g.train_t[a].size() > g.train_t[b].size(); });
  RecommendationList out{user, {}};
  for (std::size_t r = 0; r < std::min(k, order.size()); ++r) {
    out.items.push_back({order[r], static_cast<double>(g.train_t[order[r]].size()), Provenance::Retained});
  }
  return out;
}

/// Uniform sampling without replacement; the single place to change the
/// exploration weighting.
inline std::vector<NodeIndex> sample_exploration(std::vector<NodeIndex> pool, std::size_t count, std::mt19937_64& rng) {
  count = std::min(count, pool.size());
  for (std::size_t s = 0; s < count; ++s) {
    std::swap(pool[s], pool[s + detail::uniform_index(rng, pool.size() - s)]);
  }
  pool.resize(count);
  return pool;
}

/// Keeps the top floor((1 - tau) k) of top_k and fills the remaining slots
/// with items sampled from the leaves under the user's ancestor at `layer`
/// (excluding train and retained items). If that pool runs dry, the rest
/// of the original top_k list backfills, still flagged retained.
inline RecommendationList explore_exploit(const EmbeddingTable& h, const InteractionGraph& g, const HierarchyTree& tree,
                                          NodeIndex user, std::size_t k, double tau, std::size_t layer,
                                          std::uint64_t seed) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ParameterError("explore_exploit: tau must be in [0, 1]");
  if (layer < 1 || layer > tree.leaf_layer) {
    throw ParameterError("explore_exploit: layer " + std::to_string(layer) + " outside [1, " +
                         std::to_string(tree.leaf_layer) + "]");
  }
  if (tree.user_count != g.user_count || tree.item_count != g.item_count) {
    throw DimensionError("explore_exploit: tree does not match graph");
  }
  const auto base = top_k(h, g, user, k);
  const std::size_t keep_n =
      std::min(base.items.size(), static_cast<std::size_t>(std::floor((1.0 - tau) * static_cast<double>(k) + 1e-9)));
  RecommendationList out{user, {}};
  out.items.assign(base.items.begin(), base.items.begin() + static_cast<std::ptrdiff_t>(keep_n));
  const std::size_t want = base.items.size() - keep_n;
  if (want == 0) return out;

  std::vector<NodeIndex> retained;
  for (const auto& r : out.items) retained.push_back(r.item);
  std::sort(retained.begin(), retained.end());

  const auto anc = tree.ancestor(user, layer);
  std::vector<NodeIndex> pool;
  for (auto leaf : tree.leaves_under(layer, anc)) {
    if (leaf < tree.user_count) continue;
    const auto item = static_cast<NodeIndex>(leaf - tree.user_count);
    if (g.in_train(user, item) || std::binary_search(retained.begin(), retained.end(), item)) continue;
    pool.push_back(item);
  }
  auto rng = detail::make_rng(seed, 0xe7910 + user);
  const auto hu = h.user(user);
  for (NodeIndex item : sample_exploration(std::move(pool), want, rng)) {
    out.items.push_back({item, predict(hu, h.item(item), h.kappa()), Provenance::Explored});
  }
  if (out.items.size() < base.items.size()) {
    std::vector<NodeIndex> used;
    for (const auto& r : out.items) used.push_back(r.item);
    std::sort(used.begin(), used.end());
    for (std::size_t r = keep_n; r < base.items.size() && out.items.size() < base.items.size(); ++r) {
      if (!std::binary_search(used.begin(), used.end(), base.items[r].item)) out.items.push_back(base.items[r]);
    }
  }
  return out;
}

}  // namespace herec
