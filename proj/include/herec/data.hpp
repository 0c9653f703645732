#pragma once

// Interaction graph, per-user train/test split, semantic vectors and the
// head/tail item partition.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "herec/error.hpp"

namespace herec {

using NodeIndex = std::uint32_t;
using AdjacencyList = std::vector<std::vector<NodeIndex>>;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent, reproducible stream per (seed, stream id).
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL)));
}

// Uniform integer in [0, n) from raw engine output; std distributions are
// implementation-defined and would make files differ across toolchains.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % n;
}

inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Box-Muller on uniform01, for the same portability reason.
inline double standard_normal(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_index(rng, i)]);
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  s = trim(s);
  T value{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc{} || ptr != end || s.empty()) return std::nullopt;
  return value;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  return in;
}

}  // namespace detail

/// Bipartite user-item graph with a per-user train/test split.
struct InteractionGraph {
  std::size_t user_count = 0;
  std::size_t item_count = 0;
  AdjacencyList train;    // user -> sorted item ids
  AdjacencyList train_t;  // item -> sorted user ids
  AdjacencyList test;     // user -> sorted held-out item ids
  std::size_t duplicates_removed = 0;

  std::size_t train_size() const {
    std::size_t n = 0;
    for (const auto& l : train) n += l.size();
    return n;
  }
  std::size_t test_size() const {
    std::size_t n = 0;
    for (const auto& l : test) n += l.size();
    return n;
  }

  bool in_train(NodeIndex user, NodeIndex item) const {
    const auto& l = train[user];
    return std::binary_search(l.begin(), l.end(), item);
  }

  // Recomputes train_t from train.
  void rebuild_transpose() {
    train_t.assign(item_count, {});
    for (NodeIndex u = 0; u < user_count; ++u) {
      for (NodeIndex i : train[u]) train_t[i].push_back(u);
    }
  }

  // Throws FormatError if any structural invariant is broken.
  void validate() const {
    if (train.size() != user_count || test.size() != user_count || train_t.size() != item_count) {
      throw FormatError("InteractionGraph: adjacency sizes disagree with counts");
    }
    std::size_t transpose_edges = 0;
    for (NodeIndex u = 0; u < user_count; ++u) {
      for (const auto* l : {&train[u], &test[u]}) {
        if (!std::is_sorted(l->begin(), l->end()) ||
            std::adjacent_find(l->begin(), l->end()) != l->end()) {
          throw FormatError("InteractionGraph: adjacency not sorted/unique for user " + std::to_string(u));
        }
        for (NodeIndex i : *l) {
          if (i >= item_count) throw FormatError("InteractionGraph: item id out of range");
        }
      }
      for (NodeIndex i : test[u]) {
        if (in_train(u, i)) throw FormatError("InteractionGraph: train and test overlap");
      }
    }
    for (NodeIndex i = 0; i < item_count; ++i) {
      transpose_edges += train_t[i].size();
      for (NodeIndex u : train_t[i]) {
        if (u >= user_count || !in_train(u, i)) throw FormatError("InteractionGraph: transpose inconsistent");
      }
    }
    if (transpose_edges != train_size()) throw FormatError("InteractionGraph: transpose inconsistent");
  }

  friend bool operator==(const InteractionGraph& a, const InteractionGraph& b) {
    return a.user_count == b.user_count && a.item_count == b.item_count && a.train == b.train &&
           a.train_t == b.train_t && a.test == b.test;
  }
};

// Declared counts from an optional key=value manifest.
struct DatasetManifest {
  std::optional<std::size_t> user_count;
  std::optional<std::size_t> item_count;
  std::optional<std::size_t> interactions;
  std::map<std::string, std::string> extra;
};

inline DatasetManifest parse_manifest(std::istream& in) {
  DatasetManifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto s = detail::trim(line);
    if (s.empty() || s.front() == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) throw ParseError("manifest: expected key=value", lineno);
    const std::string key(detail::trim(s.substr(0, eq)));
    const std::string_view val = detail::trim(s.substr(eq + 1));
    auto as_count = [&](std::optional<std::size_t>& dst) {
      auto v = detail::parse_number<std::size_t>(val);
      if (!v) throw ParseError("manifest: bad count for " + key, lineno);
      dst = *v;
    };
    if (key == "user_count") {
      as_count(m.user_count);
    } else if (key == "item_count") {
      as_count(m.item_count);
    } else if (key == "interactions") {
      as_count(m.interactions);
    } else {
      m.extra[key] = std::string(val);
    }
  }
  return m;
}

inline DatasetManifest load_manifest(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_manifest(in);
}

inline void write_manifest(std::ostream& out, const DatasetManifest& m) {
  if (m.user_count) out << "user_count=" << *m.user_count << '\n';
  if (m.item_count) out << "item_count=" << *m.item_count << '\n';
  if (m.interactions) out << "interactions=" << *m.interactions << '\n';
  for (const auto& [k, v] : m.extra) out << k << '=' << v << '\n';
}

/// Parses `user<TAB>item` lines ('#' comments, blank lines ignored) and splits
/// each user's deduplicated items into train/test with a per-user seeded
/// shuffle. Users with >= 2 interactions keep at least one item on each side.
inline InteractionGraph parse_interactions(std::istream& in, double split_ratio, std::uint64_t seed,
                                           const DatasetManifest* manifest = nullptr) {
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ParameterError("split ratio must be in (0,1)");
  std::vector<std::pair<NodeIndex, NodeIndex>> pairs;
  std::string line;
  std::size_t lineno = 0;
  std::size_t max_user = 0, max_item = 0;
  bool any = false;
  while (std::getline(in, line)) {
    ++lineno;
    auto s = detail::trim(line);
    if (s.empty() || s.front() == '#') continue;
    const auto fields = detail::split(s, '\t');
    if (fields.size() != 2) throw ParseError("interactions: expected user<TAB>item", lineno);
    auto u = detail::parse_number<NodeIndex>(fields[0]);
    auto i = detail::parse_number<NodeIndex>(fields[1]);
    if (!u || !i) throw ParseError("interactions: ids must be nonnegative integers", lineno);
    pairs.emplace_back(*u, *i);
    max_user = std::max<std::size_t>(max_user, *u);
    max_item = std::max<std::size_t>(max_item, *i);
    any = true;
  }

  InteractionGraph g;
  g.user_count = any ? max_user + 1 : 0;
  g.item_count = any ? max_item + 1 : 0;
  if (manifest) {
    if (manifest->user_count) {
      if (*manifest->user_count < g.user_count) throw FormatError("manifest user_count smaller than data");
      g.user_count = *manifest->user_count;
    }
    if (manifest->item_count) {
      if (*manifest->item_count < g.item_count) throw FormatError("manifest item_count smaller than data");
      g.item_count = *manifest->item_count;
    }
  }

  AdjacencyList all(g.user_count);
  for (auto [u, i] : pairs) all[u].push_back(i);
  g.train.assign(g.user_count, {});
  g.test.assign(g.user_count, {});
  for (NodeIndex u = 0; u < g.user_count; ++u) {
    auto& items = all[u];
    std::sort(items.begin(), items.end());
    const auto before = items.size();
    items.erase(std::unique(items.begin(), items.end()), items.end());
    g.duplicates_removed += before - items.size();

    const std::size_t n = items.size();
    std::size_t n_train = n;
    if (n >= 2) {
      const auto want = static_cast<std::size_t>(std::llround(split_ratio * static_cast<double>(n)));
      n_train = std::clamp<std::size_t>(want, 1, n - 1);
    }
    auto rng = detail::make_rng(seed, u);
    detail::shuffle(items, rng);
    g.train[u].assign(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n_train));
    g.test[u].assign(items.begin() + static_cast<std::ptrdiff_t>(n_train), items.end());
    std::sort(g.train[u].begin(), g.train[u].end());
    std::sort(g.test[u].begin(), g.test[u].end());
  }
  if (manifest && manifest->interactions && *manifest->interactions != g.train_size() + g.test_size()) {
    throw FormatError("manifest interactions count does not match deduplicated data");
  }
  g.rebuild_transpose();
  return g;
}

inline InteractionGraph load_interactions(const std::string& path, double split_ratio, std::uint64_t seed,
                                          const DatasetManifest* manifest = nullptr) {
  auto in = detail::open_input(path);
  return parse_interactions(in, split_ratio, seed, manifest);
}

// Split-labelled form: `user<TAB>item<TAB>train|test`, with a count header.
inline void save_graph(std::ostream& out, const InteractionGraph& g) {
  out << "# users=" << g.user_count << " items=" << g.item_count << '\n';
  for (NodeIndex u = 0; u < g.user_count; ++u) {
    for (NodeIndex i : g.train[u]) out << u << '\t' << i << "\ttrain\n";
    for (NodeIndex i : g.test[u]) out << u << '\t' << i << "\ttest\n";
  }
}

inline InteractionGraph read_graph(std::istream& in) {
  InteractionGraph g;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    auto s = detail::trim(line);
    if (s.empty()) continue;
    if (s.front() == '#') {
      std::size_t users = 0, items = 0;
      if (std::sscanf(std::string(s).c_str(), "# users=%zu items=%zu", &users, &items) == 2) {
        g.user_count = users;
        g.item_count = items;
        g.train.assign(users, {});
        g.test.assign(users, {});
        header = true;
      }
      continue;
    }
    if (!header) throw ParseError("graph: missing count header", lineno);
    const auto f = detail::split(s, '\t');
    if (f.size() != 3) throw ParseError("graph: expected user<TAB>item<TAB>split", lineno);
    auto u = detail::parse_number<NodeIndex>(f[0]);
    auto i = detail::parse_number<NodeIndex>(f[1]);
    if (!u || !i || *u >= g.user_count || *i >= g.item_count) throw ParseError("graph: bad ids", lineno);
    if (f[2] == "train") {
      g.train[*u].push_back(*i);
    } else if (f[2] == "test") {
      g.test[*u].push_back(*i);
    } else {
      throw ParseError("graph: split must be train or test", lineno);
    }
  }
  for (auto* adj : {&g.train, &g.test}) {
    for (auto& l : *adj) std::sort(l.begin(), l.end());
  }
  g.rebuild_transpose();
  g.validate();
  return g;
}

// ---- Semantic vectors ------------------------------------------------------

enum class NodeKind : std::uint8_t { User, Item };

struct NodeId {
  NodeKind kind = NodeKind::User;
  NodeIndex id = 0;
  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

/// Precomputed text-encoder vectors; nodes without a row are simply absent.
struct SemanticVectors {
  std::size_t dim = 0;
  std::map<NodeId, std::vector<double>> rows;

  bool empty() const { return rows.empty(); }
  std::size_t size() const { return rows.size(); }
  const std::vector<double>* find(NodeKind kind, NodeIndex id) const {
    auto it = rows.find(NodeId{kind, id});
    return it == rows.end() ? nullptr : &it->second;
  }
};

/// `u|i<TAB>id<TAB>v1,v2,...,vd`; every row must share d.
inline SemanticVectors parse_semantic_vectors(std::istream& in) {
  SemanticVectors sv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto s = detail::trim(line);
    if (s.empty() || s.front() == '#') continue;
    const auto f = detail::split(s, '\t');
    if (f.size() != 3) throw ParseError("semantic: expected kind<TAB>id<TAB>values", lineno);
    NodeKind kind;
    if (f[0] == "u") {
      kind = NodeKind::User;
    } else if (f[0] == "i") {
      kind = NodeKind::Item;
    } else {
      throw ParseError("semantic: node kind must be u or i", lineno);
    }
    auto id = detail::parse_number<NodeIndex>(f[1]);
    if (!id) throw ParseError("semantic: bad node id", lineno);
    std::vector<double> values;
    for (auto tok : detail::split(f[2], ',')) {
      // from_chars for double is available in libstdc++ 11.
      auto v = detail::parse_number<double>(tok);
      if (!v || !std::isfinite(*v)) throw ParseError("semantic: bad value", lineno);
      values.push_back(*v);
    }
    if (sv.rows.empty()) {
      sv.dim = values.size();
    } else if (values.size() != sv.dim) {
      throw FormatError("semantic: dimension " + std::to_string(values.size()) + " at line " +
                        std::to_string(lineno) + " differs from " + std::to_string(sv.dim));
    }
    if (!sv.rows.emplace(NodeId{kind, *id}, std::move(values)).second) {
      throw FormatError("semantic: duplicate record at line " + std::to_string(lineno));
    }
  }
  return sv;
}

inline SemanticVectors load_semantic_vectors(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_semantic_vectors(in);
}

// ---- Head / tail -----------------------------------------------------------

struct DatasetStats {
  std::size_t train_interactions = 0;
  std::size_t test_interactions = 0;
  std::vector<std::size_t> item_train_counts;
  std::vector<NodeIndex> head;  // H20, in popularity order
  std::vector<NodeIndex> tail;  // T80, in popularity order
  std::vector<bool> is_head;    // indexed by item id
};

/// Items sorted by train count (desc, ties by ascending id); the first
/// ceil(0.2 * item_count) form the head.
inline DatasetStats head_tail_split(const InteractionGraph& g) {
  if (g.item_count == 0) throw ParameterError("head_tail_split: empty item set");
  DatasetStats st;
  st.train_interactions = g.train_size();
  st.test_interactions = g.test_size();
  st.item_train_counts.assign(g.item_count, 0);
  for (NodeIndex i = 0; i < g.item_count; ++i) st.item_train_counts[i] = g.train_t[i].size();
  std::vector<NodeIndex> order(g.item_count);
  for (NodeIndex i = 0; i < g.item_count; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](NodeIndex a, NodeIndex b) {
    return st.item_train_counts[a] > st.item_train_counts[b];
  });
  const auto head_n = static_cast<std::size_t>(std::ceil(0.2 * static_cast<double>(g.item_count) - 1e-9));
  st.head.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(head_n));
  st.tail.assign(order.begin() + static_cast<std::ptrdiff_t>(head_n), order.end());
  st.is_head.assign(g.item_count, false);
  for (NodeIndex i : st.head) st.is_head[i] = true;
  return st;
}

}  // namespace herec
