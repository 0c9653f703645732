#pragma once

// Utility (Recall@K, NDCG@K) and diversity (Div, entropy, EPC) metrics with
// head/tail breakdowns.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "herec/data.hpp"
#include "herec/error.hpp"
#include "herec/model.hpp"
#include "herec/recommend.hpp"

namespace herec {

namespace detail {

inline std::span<const NodeIndex> prefix(std::span<const NodeIndex> list, std::size_t k) {
  return list.first(std::min(k, list.size()));
}

inline bool contains_sorted(std::span<const NodeIndex> sorted, NodeIndex x) {
  return std::binary_search(sorted.begin(), sorted.end(), x);
}

// Hit flags for the first K slots, counting each item once.
inline std::vector<bool> hit_mask(std::span<const NodeIndex> list, std::span<const NodeIndex> test_sorted,
                                  std::size_t k) {
  const auto top = prefix(list, k);
  std::vector<bool> hits(top.size(), false);
  std::vector<NodeIndex> seen;
  for (std::size_t r = 0; r < top.size(); ++r) {
    if (std::find(seen.begin(), seen.end(), top[r]) != seen.end()) continue;
    seen.push_back(top[r]);
    hits[r] = contains_sorted(test_sorted, top[r]);
  }
  return hits;
}

inline double idcg(std::size_t relevant, std::size_t k) {
  double s = 0.0;
  for (std::size_t r = 1; r <= std::min(relevant, k); ++r) s += 1.0 / std::log2(static_cast<double>(r) + 1.0);
  return s;
}

}  // namespace detail

/// |top-K ∩ test| / |test|; 0 for an empty test set (callers exclude those).
inline double recall_at_k(std::span<const NodeIndex> list, std::span<const NodeIndex> test_sorted, std::size_t k) {
  if (k == 0) throw ParameterError("recall_at_k: K must be >= 1");
  if (test_sorted.empty()) return 0.0;
  const auto hits = detail::hit_mask(list, test_sorted, k);
  return static_cast<double>(std::count(hits.begin(), hits.end(), true)) / static_cast<double>(test_sorted.size());
}

/// DCG with 1/log2(rank + 1) gains over IDCG of min(|test|, K) ideal ranks.
inline double ndcg_at_k(std::span<const NodeIndex> list, std::span<const NodeIndex> test_sorted, std::size_t k) {
  if (k == 0) throw ParameterError("ndcg_at_k: K must be >= 1");
  if (test_sorted.empty()) return 0.0;
  const auto hits = detail::hit_mask(list, test_sorted, k);
  double dcg = 0.0;
  for (std::size_t r = 0; r < hits.size(); ++r) {
    if (hits[r]) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  return dcg / detail::idcg(test_sorted.size(), k);
}

/// Mean d_H over the C(n, 2) unordered pairs of the top-K items; lists with
/// fewer than two items yield NaN (excluded from averages).
inline double div_at_k(std::span<const NodeIndex> list, const EmbeddingTable& h, std::size_t k) {
  const auto top = detail::prefix(list, k);
  if (top.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (std::size_t a = 0; a < top.size(); ++a) {
    for (std::size_t b = a + 1; b < top.size(); ++b) s += dist(h.item(top[a]), h.item(top[b]), h.kappa());
  }
  const double pairs = static_cast<double>(top.size() * (top.size() - 1) / 2);
  return s / pairs;
}

/// Base-2 entropy of item frequencies over the multiset of all top-K lists.
inline double shannon_entropy(std::span<const std::vector<NodeIndex>> lists, std::size_t k) {
  std::map<NodeIndex, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& l : lists) {
    for (auto i : detail::prefix(l, k)) {
      ++counts[i];
      ++total;
    }
  }
  if (total == 0) throw ParameterError("shannon_entropy: no recommended items");
  double h = 0.0;
  for (const auto& [item, c] : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return h;
}

/// 1 - mean over the distinct recommended items of pop(i) / max_j pop(j),
/// with pop from train interaction counts over all items.
inline double epc(std::span<const std::vector<NodeIndex>> lists, const InteractionGraph& g, std::size_t k) {
  std::size_t max_pop = 0;
  for (NodeIndex i = 0; i < g.item_count; ++i) max_pop = std::max(max_pop, g.train_t[i].size());
  if (max_pop == 0) throw ParameterError("epc: no training interactions");
  std::vector<NodeIndex> set;
  for (const auto& l : lists) {
    auto top = detail::prefix(l, k);
    set.insert(set.end(), top.begin(), top.end());
  }
  std::sort(set.begin(), set.end());
  set.erase(std::unique(set.begin(), set.end()), set.end());
  if (set.empty()) throw ParameterError("epc: no recommended items");
  double s = 0.0;
  for (auto i : set) s += static_cast<double>(g.train_t[i].size()) / static_cast<double>(max_pop);
  return 1.0 - s / static_cast<double>(set.size());
}

/// Spearman rank correlation with average ranks for ties; 0 when either
/// side is constant.
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("spearman: length mismatch");
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t s = 0; s < idx.size();) {
      std::size_t e = s;
      while (e + 1 < idx.size() && v[idx[e + 1]] == v[idx[s]]) ++e;
      const double avg = (static_cast<double>(s) + static_cast<double>(e)) / 2.0 + 1.0;
      for (std::size_t q = s; q <= e; ++q) r[idx[q]] = avg;
      s = e + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// ---- Reports ---------------------------------------------------------------

struct MetricsAtK {
  std::size_t k = 0;
  double recall = 0.0;
  double ndcg = 0.0;
  double div = 0.0;
  double entropy = 0.0;
  double epc = 0.0;
  // Head/tail shares: hits restricted to H20 (T80) over the full test set, so
  // recall_head + recall_tail == recall (and likewise for NDCG).
  double recall_head = 0.0;
  double recall_tail = 0.0;
  double ndcg_head = 0.0;
  double ndcg_tail = 0.0;
  friend bool operator==(const MetricsAtK&, const MetricsAtK&) = default;
};

struct EvalReport {
  std::size_t users_evaluated = 0;
  std::vector<MetricsAtK> at;

  const MetricsAtK& at_k(std::size_t k) const {
    for (const auto& m : at) {
      if (m.k == k) return m;
    }
    throw LookupError("EvalReport: no metrics at K=" + std::to_string(k));
  }
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Scores ranked lists (one per user; users with empty test sets skipped).
inline EvalReport evaluate_lists(std::span<const std::vector<NodeIndex>> lists, const InteractionGraph& g,
                                 const EmbeddingTable& h, std::span<const std::size_t> ks) {
  if (lists.size() != g.user_count) throw DimensionError("evaluate_lists: one list per user expected");
  const auto stats = head_tail_split(g);
  EvalReport rep;
  std::vector<std::vector<NodeIndex>> evaluated;
  std::vector<NodeIndex> users;
  for (NodeIndex u = 0; u < g.user_count; ++u) {
    if (g.test[u].empty()) continue;
    users.push_back(u);
    evaluated.push_back(lists[u]);
  }
  rep.users_evaluated = users.size();
  for (std::size_t k : ks) {
    MetricsAtK m;
    m.k = k;
    if (users.empty()) {
      rep.at.push_back(m);
      continue;
    }
    double div_sum = 0.0;
    std::size_t div_n = 0;
    for (std::size_t e = 0; e < users.size(); ++e) {
      const auto& test = g.test[users[e]];
      const auto& list = evaluated[e];
      m.recall += recall_at_k(list, test, k);
      m.ndcg += ndcg_at_k(list, test, k);
      const auto hits = detail::hit_mask(list, test, k);
      const double id = detail::idcg(test.size(), k);
      for (std::size_t r = 0; r < hits.size(); ++r) {
        if (!hits[r]) continue;
        const bool head = stats.is_head[list[r]];
        (head ? m.recall_head : m.recall_tail) += 1.0 / static_cast<double>(test.size());
        (head ? m.ndcg_head : m.ndcg_tail) += 1.0 / std::log2(static_cast<double>(r) + 2.0) / id;
      }
      const double dv = div_at_k(list, h, k);
      if (!std::isnan(dv)) {
        div_sum += dv;
        ++div_n;
      }
    }
    const double nu = static_cast<double>(users.size());
    m.recall /= nu;
    m.ndcg /= nu;
    m.recall_head /= nu;
    m.recall_tail /= nu;
    m.ndcg_head /= nu;
    m.ndcg_tail /= nu;
    m.div = div_n ? div_sum / static_cast<double>(div_n) : 0.0;
    bool any_item = false;
    for (const auto& l : evaluated) any_item = any_item || !l.empty();
    if (any_item) {
      m.entropy = shannon_entropy(evaluated, k);
      m.epc = epc(evaluated, g, k);
    }
    rep.at.push_back(m);
  }
  return rep;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["users_evaluated"] = r.users_evaluated;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& m : r.at) {
    nlohmann::ordered_json mj;
    mj["k"] = m.k;
    mj["recall"] = m.recall;
    mj["ndcg"] = m.ndcg;
    mj["div"] = m.div;
    mj["entropy"] = m.entropy;
    mj["epc"] = m.epc;
    mj["recall_head"] = m.recall_head;
    mj["recall_tail"] = m.recall_tail;
    mj["ndcg_head"] = m.ndcg_head;
    mj["ndcg_tail"] = m.ndcg_tail;
    arr.push_back(std::move(mj));
  }
  j["metrics"] = std::move(arr);
  return j;
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.users_evaluated = j.at("users_evaluated").get<std::size_t>();
  for (const auto& mj : j.at("metrics")) {
    MetricsAtK m;
    m.k = mj.at("k").get<std::size_t>();
    m.recall = mj.at("recall").get<double>();
    m.ndcg = mj.at("ndcg").get<double>();
    m.div = mj.at("div").get<double>();
    m.entropy = mj.at("entropy").get<double>();
    m.epc = mj.at("epc").get<double>();
    m.recall_head = mj.at("recall_head").get<double>();
    m.recall_tail = mj.at("recall_tail").get<double>();
    m.ndcg_head = mj.at("ndcg_head").get<double>();
    m.ndcg_tail = mj.at("ndcg_tail").get<double>();
    r.at.push_back(m);
  }
  return r;
}

inline std::string to_table(const EvalReport& r) {
  std::ostringstream os;
  os << "users evaluated: " << r.users_evaluated << '\n';
  const char* cols[] = {"K", "Recall", "NDCG", "Div", "H", "EPC", "Recall(H20)", "Recall(T80)", "NDCG(H20)", "NDCG(T80)"};
  for (const char* c : cols) os << std::setw(12) << c;
  os << '\n';
  os << std::fixed << std::setprecision(4);
  for (const auto& m : r.at) {
    os << std::setw(12) << m.k << std::setw(12) << m.recall << std::setw(12) << m.ndcg << std::setw(12) << m.div
       << std::setw(12) << m.entropy << std::setw(12) << m.epc << std::setw(12) << m.recall_head << std::setw(12)
       << m.recall_tail << std::setw(12) << m.ndcg_head << std::setw(12) << m.ndcg_tail << '\n';
  }
  return os.str();
}

}  // namespace herec
