#pragma once

// Hyperbolic graph collaborative filtering: embeddings, tangent-space message
// passing, distance-based prediction, HAML margins, HINS negatives and the
// semantic alignment loss, with the reverse-mode pass used for training.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "herec/data.hpp"
#include "herec/error.hpp"
#include "herec/manifold.hpp"

namespace herec {

inline constexpr double kPredictEpsilon = 1e-12;

/// One LorentzPoint per user and per item, stored row-major: users first,
/// then items. Row width is n + 1.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::size_t user_count, std::size_t item_count, std::size_t n, double kappa = 1.0)
      : user_count_(user_count), item_count_(item_count), n_(n), kappa_(kappa),
        data_((user_count + item_count) * (n + 1), 0.0) {
    for (std::size_t r = 0; r < rows(); ++r) data_[r * width()] = std::sqrt(kappa);
  }

  std::size_t user_count() const noexcept { return user_count_; }
  std::size_t item_count() const noexcept { return item_count_; }
  std::size_t rows() const noexcept { return user_count_ + item_count_; }
  std::size_t dim() const noexcept { return n_; }
  std::size_t width() const noexcept { return n_ + 1; }
  double kappa() const noexcept { return kappa_; }

  std::size_t item_row(NodeIndex item) const noexcept { return user_count_ + item; }

  ConstSpan row(std::size_t r) const { return {data_.data() + r * width(), width()}; }
  MutSpan row(std::size_t r) { return {data_.data() + r * width(), width()}; }
  ConstSpan user(NodeIndex u) const { return row(u); }
  ConstSpan item(NodeIndex i) const { return row(item_row(i)); }

  LorentzPoint point(std::size_t r) const {
    auto s = row(r);
    return LorentzPoint(std::vector<double>(s.begin(), s.end()), kappa_);
  }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  double max_constraint_error() const {
    double worst = 0.0;
    for (std::size_t r = 0; r < rows(); ++r) {
      worst = std::max(worst, std::abs(lorentz_inner(row(r), row(r)) + kappa_));
    }
    return worst;
  }

  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;

 private:
  std::size_t user_count_ = 0;
  std::size_t item_count_ = 0;
  std::size_t n_ = 0;
  double kappa_ = 1.0;
  std::vector<double> data_;
};

/// Draws e ~ N(0, sigma^2) per spatial coordinate and sets h0 = exp_o((0, e)).
inline EmbeddingTable init_embeddings(std::size_t user_count, std::size_t item_count, std::size_t n,
                                      double sigma, std::uint64_t seed, double kappa = 1.0) {
  if (n < 2) throw ParameterError("init_embeddings: n must be >= 2");
  if (!(sigma >= 0.0)) throw ParameterError("init_embeddings: sigma must be >= 0");
  EmbeddingTable t(user_count, item_count, n, kappa);
  auto rng = detail::make_rng(seed, 0x1417);
  std::vector<double> e(n);
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (auto& v : e) v = sigma * detail::standard_normal(rng);
    exp_origin_into(e, kappa, t.row(r));
  }
  return t;
}

// ---- Semantic adapter --------------------------------------------------------

/// Two affine layers with tanh between them: semantic dim -> hidden -> n.
/// Parameters are one flat vector: W1 [hidden x in], b1, W2 [out x hidden], b2.
struct Adapter {
  std::size_t in_dim = 0;
  std::size_t hidden = 0;
  std::size_t out_dim = 0;
  std::vector<double> params;

  static constexpr std::size_t kDefaultHidden = 256;

  bool empty() const noexcept { return in_dim == 0; }
  std::size_t w1() const noexcept { return 0; }
  std::size_t b1() const noexcept { return hidden * in_dim; }
  std::size_t w2() const noexcept { return b1() + hidden; }
  std::size_t b2() const noexcept { return w2() + out_dim * hidden; }
  static std::size_t param_count(std::size_t in, std::size_t hid, std::size_t out) {
    return hid * in + hid + out * hid + out;
  }

  static Adapter create(std::size_t in, std::size_t hid, std::size_t out, std::uint64_t seed) {
    Adapter a{in, hid, out, std::vector<double>(param_count(in, hid, out), 0.0)};
    if (in == 0) return a;
    auto rng = detail::make_rng(seed, 0xada9);
    const double l1 = std::sqrt(6.0 / static_cast<double>(in + hid));
    const double l2 = std::sqrt(6.0 / static_cast<double>(hid + out));
    for (std::size_t k = 0; k < hid * in; ++k) a.params[a.w1() + k] = l1 * (2.0 * detail::uniform01(rng) - 1.0);
    for (std::size_t k = 0; k < out * hid; ++k) a.params[a.w2() + k] = l2 * (2.0 * detail::uniform01(rng) - 1.0);
    return a;
  }

  // Writes the n-dim output; `act` receives the hidden activations (size hidden).
  void forward(ConstSpan e, MutSpan out, MutSpan act) const {
    if (e.size() != in_dim) throw DimensionError("Adapter: input dimension mismatch");
    for (std::size_t h = 0; h < hidden; ++h) {
      double s = params[b1() + h];
      const double* w = params.data() + w1() + h * in_dim;
      for (std::size_t k = 0; k < in_dim; ++k) s += w[k] * e[k];
      act[h] = std::tanh(s);
    }
    for (std::size_t o = 0; o < out_dim; ++o) {
      double s = params[b2() + o];
      const double* w = params.data() + w2() + o * hidden;
      for (std::size_t h = 0; h < hidden; ++h) s += w[h] * act[h];
      out[o] = s;
    }
  }

  std::vector<double> operator()(ConstSpan e) const {
    std::vector<double> out(out_dim), act(hidden);
    forward(e, out, act);
    return out;
  }

  // Accumulates parameter gradients given dL/d(out).
  void backward(ConstSpan e, ConstSpan act, ConstSpan grad_out, MutSpan grad_params) const {
    std::vector<double> g_act(hidden, 0.0);
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double g = grad_out[o];
      if (g == 0.0) continue;
      grad_params[b2() + o] += g;
      const double* w = params.data() + w2() + o * hidden;
      double* gw = grad_params.data() + w2() + o * hidden;
      for (std::size_t h = 0; h < hidden; ++h) {
        gw[h] += g * act[h];
        g_act[h] += g * w[h];
      }
    }
    for (std::size_t h = 0; h < hidden; ++h) {
      const double gp = g_act[h] * (1.0 - act[h] * act[h]);
      if (gp == 0.0) continue;
      grad_params[b1() + h] += gp;
      double* gw = grad_params.data() + w1() + h * in_dim;
      for (std::size_t k = 0; k < in_dim; ++k) gw[k] += gp * e[k];
    }
  }

  friend bool operator==(const Adapter&, const Adapter&) = default;
};

// Dense per-node lookup of semantic rows.
class SemanticIndex {
 public:
  SemanticIndex() = default;
  SemanticIndex(const SemanticVectors& sv, std::size_t user_count, std::size_t item_count)
      : dim_(sv.dim), row_of_(user_count + item_count, -1), user_count_(user_count) {
    for (const auto& [node, values] : sv.rows) {
      const std::size_t limit = node.kind == NodeKind::User ? user_count : item_count;
      if (node.id >= limit) continue;  // vectors for nodes absent from the graph are ignored
      const std::size_t r = node.kind == NodeKind::User ? node.id : user_count + node.id;
      row_of_[r] = static_cast<std::int64_t>(data_.size() / std::max<std::size_t>(dim_, 1));
      data_.insert(data_.end(), values.begin(), values.end());
    }
  }

  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return data_.empty(); }
  bool has(std::size_t node_row) const { return node_row < row_of_.size() && row_of_[node_row] >= 0; }
  ConstSpan vector(std::size_t node_row) const {
    return {data_.data() + static_cast<std::size_t>(row_of_[node_row]) * dim_, dim_};
  }
  bool is_user(std::size_t node_row) const noexcept { return node_row < user_count_; }

 private:
  std::size_t dim_ = 0;
  std::vector<std::int64_t> row_of_;
  std::vector<double> data_;
  std::size_t user_count_ = 0;
};

// ---- Message passing -------------------------------------------------------

/// Tangent vectors at the origin for each layer's sum and the resulting
/// final points h = exp_o(sum_l z^l).
struct Propagation {
  std::size_t layers = 0;
  std::vector<double> z0;  // rows x n (spatial part; time part is 0)
  std::vector<double> z;   // rows x n
  EmbeddingTable final;
};

namespace detail {

// out = (I + P) in, where P averages each node's train neighbours.
inline void aggregate_once(const InteractionGraph& g, std::size_t n, const std::vector<double>& in,
                           std::vector<double>& out) {
  const std::size_t users = g.user_count;
  out = in;
  for (NodeIndex u = 0; u < users; ++u) {
    const auto& nb = g.train[u];
    if (nb.empty()) continue;
    const double w = 1.0 / static_cast<double>(nb.size());
    double* dst = out.data() + static_cast<std::size_t>(u) * n;
    for (NodeIndex i : nb) {
      const double* src = in.data() + (users + i) * n;
      for (std::size_t k = 0; k < n; ++k) dst[k] += w * src[k];
    }
  }
  for (NodeIndex i = 0; i < g.item_count; ++i) {
    const auto& nb = g.train_t[i];
    if (nb.empty()) continue;
    const double w = 1.0 / static_cast<double>(nb.size());
    double* dst = out.data() + (users + i) * n;
    for (NodeIndex u : nb) {
      const double* src = in.data() + static_cast<std::size_t>(u) * n;
      for (std::size_t k = 0; k < n; ++k) dst[k] += w * src[k];
    }
  }
}

// out = (I + P)^T in.
inline void aggregate_transpose_once(const InteractionGraph& g, std::size_t n, const std::vector<double>& in,
                                     std::vector<double>& out) {
  const std::size_t users = g.user_count;
  out = in;
  // P[u, i] = 1/|N_u| contributes in[u] / |N_u| to out[i].
  for (NodeIndex u = 0; u < users; ++u) {
    const auto& nb = g.train[u];
    if (nb.empty()) continue;
    const double w = 1.0 / static_cast<double>(nb.size());
    const double* src = in.data() + static_cast<std::size_t>(u) * n;
    for (NodeIndex i : nb) {
      double* dst = out.data() + (users + i) * n;
      for (std::size_t k = 0; k < n; ++k) dst[k] += w * src[k];
    }
  }
  for (NodeIndex i = 0; i < g.item_count; ++i) {
    const auto& nb = g.train_t[i];
    if (nb.empty()) continue;
    const double w = 1.0 / static_cast<double>(nb.size());
    const double* src = in.data() + (users + i) * n;
    for (NodeIndex u : nb) {
      double* dst = out.data() + static_cast<std::size_t>(u) * n;
      for (std::size_t k = 0; k < n; ++k) dst[k] += w * src[k];
    }
  }
}

inline void check_graph_matches(const EmbeddingTable& t, const InteractionGraph& g) {
  if (t.user_count() != g.user_count || t.item_count() != g.item_count) {
    throw DimensionError("embedding table (" + std::to_string(t.user_count()) + " users, " +
                         std::to_string(t.item_count()) + " items) does not match graph (" +
                         std::to_string(g.user_count) + ", " + std::to_string(g.item_count) + ")");
  }
}

}  // namespace detail

/// z^0 = log_o(h^0); z^l = z^{l-1} + mean of neighbours' z^{l-1};
/// h = exp_o(sum_{l=0..L} z^l). Isolated nodes only carry their own term.
inline Propagation message_passing(const EmbeddingTable& table, const InteractionGraph& g, std::size_t layers) {
  detail::check_graph_matches(table, g);
  const std::size_t n = table.dim();
  const std::size_t rows = table.rows();
  Propagation p;
  p.layers = layers;
  p.z0.assign(rows * n, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    log_origin_into(table.row(r), table.kappa(), MutSpan(p.z0.data() + r * n, n));
  }
  p.z = p.z0;
  std::vector<double> cur = p.z0, next;
  for (std::size_t l = 1; l <= layers; ++l) {
    detail::aggregate_once(g, n, cur, next);
    for (std::size_t k = 0; k < p.z.size(); ++k) p.z[k] += next[k];
    cur.swap(next);
  }
  p.final = EmbeddingTable(table.user_count(), table.item_count(), n, table.kappa());
  for (std::size_t r = 0; r < rows; ++r) {
    exp_origin_into(ConstSpan(p.z.data() + r * n, n), table.kappa(), p.final.row(r));
  }
  return p;
}

/// Maps dL/dh (ambient, rows x (n+1), w.r.t. the final points) back to
/// dL/dh^0 (ambient, rows x (n+1)).
inline std::vector<double> message_passing_backward(const EmbeddingTable& table, const InteractionGraph& g,
                                                    const Propagation& p, std::span<const double> grad_final) {
  const std::size_t n = table.dim();
  const std::size_t w = table.width();
  const std::size_t rows = table.rows();
  std::vector<double> gz(rows * n, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    ConstSpan gh(grad_final.data() + r * w, w);
    bool any = false;
    for (double v : gh) any = any || v != 0.0;
    if (!any) continue;
    exp_origin_backward(ConstSpan(p.z.data() + r * n, n), gh, table.kappa(), MutSpan(gz.data() + r * n, n));
  }
  // d/dz0 of sum_l A^l z0 = sum_l (A^T)^l gz, evaluated Horner-style.
  std::vector<double> acc = gz, tmp;
  for (std::size_t l = 0; l < p.layers; ++l) {
    detail::aggregate_transpose_once(g, n, acc, tmp);
    for (std::size_t k = 0; k < tmp.size(); ++k) tmp[k] += gz[k];
    acc.swap(tmp);
  }
  std::vector<double> gh0(rows * w, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    log_origin_backward(table.row(r), ConstSpan(acc.data() + r * n, n), table.kappa(),
                        MutSpan(gh0.data() + r * w, w));
  }
  return gh0;
}

// ---- Scoring and losses ----------------------------------------------------

/// p(u,i) = 1 / (d_H(h_u, h_i) + eps)
inline double predict(ConstSpan hu, ConstSpan hi, double kappa = 1.0) {
  return 1.0 / (dist(hu, hi, kappa) + kPredictEpsilon);
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double dist_to_origin(ConstSpan x, double kappa = 1.0) {
  // -<x,o>/kappa = x0 / sqrt(kappa)
  const double sk = std::sqrt(kappa);
  const double z = x[0] / sk;
  if (z < 1.5) {
    return sk * std::asinh(detail::spatial_norm(x) / sk);
  }
  return sk * std::acosh(z);
}

/// HAML margin: sigmoid(delta) with
/// delta = (d^2(e_u,o) + d^2(e_i,o) - d^2(e_u,e_i)) / (e_u0 * e_i0).
inline double haml_margin(ConstSpan eu, ConstSpan ei, double kappa = 1.0) {
  if (!(eu[0] > 0.0 && ei[0] > 0.0)) throw ParameterError("haml_margin: time coordinates must be positive");
  const double du = dist_to_origin(eu, kappa);
  const double di = dist_to_origin(ei, kappa);
  const double dui = dist(eu, ei, kappa);
  const double delta = (du * du + di * di - dui * dui) / (eu[0] * ei[0]);
  return sigmoid(delta);
}

/// max(d^2(u,i) - d^2(u,j) + m, 0)
inline double margin_loss(ConstSpan hu, ConstSpan hi, ConstSpan hj, double m, double kappa = 1.0) {
  if (!(m >= 0.0)) throw ParameterError("margin_loss: margin must be >= 0");
  const double dp = dist(hu, hi, kappa);
  const double dn = dist(hu, hj, kappa);
  return std::max(dp * dp - dn * dn + m, 0.0);
}

/// HINS: draw `pool_size` items uniformly (with replacement) from those the
/// user has not interacted with in `g`, return the one closest to the
/// positive item (ties: lowest id).
inline NodeIndex hins_select(const EmbeddingTable& h, const InteractionGraph& g, NodeIndex user,
                             NodeIndex positive, std::size_t pool_size, std::mt19937_64& rng) {
  if (pool_size == 0) throw ParameterError("hins_select: pool size must be >= 1");
  if (g.train[user].size() >= g.item_count) {
    throw SamplingError("hins_select: user " + std::to_string(user) + " interacted with every item");
  }
  const auto pos_row = h.item(positive);
  NodeIndex best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < pool_size; ++c) {
    NodeIndex cand;
    do {
      cand = static_cast<NodeIndex>(detail::uniform_index(rng, g.item_count));
    } while (g.in_train(user, cand));
    if (pool_size == 1) return cand;
    const double d = dist(h.item(cand), pos_row, h.kappa());
    if (d < best_d || (d == best_d && cand < best)) {
      best_d = d;
      best = cand;
    }
  }
  return best;
}

/// s_x = exp_o((0, adapter(e_x))); returns d_H^2(h_x, s_x).
inline double align_loss(ConstSpan hx, ConstSpan semantic, const Adapter& adapter, double kappa = 1.0) {
  const auto a = adapter(semantic);
  if (a.size() + 1 != hx.size()) throw DimensionError("align_loss: adapter output does not match embedding");
  std::vector<double> s(hx.size());
  exp_origin_into(a, kappa, s);
  const double d = dist(hx, s, kappa);
  return d * d;
}

struct LossReport {
  double margin_loss = 0.0;
  double align_loss = 0.0;
  double align_weight = 0.0;
  double total = 0.0;
  std::size_t examples = 0;
  std::size_t align_terms = 0;
  std::size_t align_skipped = 0;  // touched nodes without a semantic vector
};

struct Triple {
  NodeIndex user;
  NodeIndex positive;
  NodeIndex negative;
};

struct LossConfig {
  std::size_t negatives = 20;  // HINS pool size
  double align_weight = 1e-2;
  bool align_users = true;
};

/// Loss (and optionally ambient gradients) for explicit triples evaluated on
/// the final embeddings. Margins are HAML margins of (h_u, h_i) and are held
/// constant when differentiating.
struct TripleEvaluation {
  LossReport report;
  std::vector<double> grad_final;    // rows x (n+1); empty unless requested
  std::vector<double> grad_adapter;  // adapter.params.size(); empty unless requested
};

inline TripleEvaluation evaluate_triples(const EmbeddingTable& h, std::span<const Triple> triples,
                                         const SemanticIndex& semantic, const Adapter& adapter,
                                         const LossConfig& cfg, bool with_grad) {
  const std::size_t w = h.width();
  const double kappa = h.kappa();
  TripleEvaluation ev;
  ev.report.align_weight = cfg.align_weight;
  if (with_grad) {
    ev.grad_final.assign(h.rows() * w, 0.0);
    ev.grad_adapter.assign(adapter.params.size(), 0.0);
  }
  std::vector<double> tmp(w);
  auto add_grad = [&](std::size_t row, ConstSpan g, double scale) {
    double* dst = ev.grad_final.data() + row * w;
    for (std::size_t k = 0; k < w; ++k) dst[k] += scale * g[k];
  };

  std::vector<std::size_t> touched;
  for (const auto& t : triples) {
    const auto hu = h.user(t.user), hi = h.item(t.positive), hj = h.item(t.negative);
    const double m = haml_margin(hu, hi, kappa);
    const double loss = margin_loss(hu, hi, hj, m, kappa);
    ev.report.margin_loss += loss;
    ++ev.report.examples;
    if (with_grad && loss > 0.0) {
      const std::size_t ru = t.user, ri = h.item_row(t.positive), rj = h.item_row(t.negative);
      sq_dist_egrad(hu, hi, kappa, tmp);
      add_grad(ru, tmp, 1.0);
      sq_dist_egrad(hu, hj, kappa, tmp);
      add_grad(ru, tmp, -1.0);
      sq_dist_egrad(hi, hu, kappa, tmp);
      add_grad(ri, tmp, 1.0);
      sq_dist_egrad(hj, hu, kappa, tmp);
      add_grad(rj, tmp, -1.0);
    }
    touched.push_back(t.user);
    touched.push_back(h.item_row(t.positive));
    touched.push_back(h.item_row(t.negative));
  }
  std::sort(touched.begin(), touched.end());
  touched.erase(std::unique(touched.begin(), touched.end()), touched.end());

  if (!adapter.empty() && cfg.align_weight > 0.0) {
    const std::size_t n = h.dim();
    std::vector<double> a(n), act(adapter.hidden), s(w), gs(w), ga(n);
    for (std::size_t row : touched) {
      if (semantic.is_user(row) && !cfg.align_users) continue;
      if (!semantic.has(row)) {
        ++ev.report.align_skipped;
        continue;
      }
      const auto e = semantic.vector(row);
      adapter.forward(e, a, act);
      exp_origin_into(a, kappa, s);
      const auto hx = h.row(row);
      const double d = dist(hx, s, kappa);
      ev.report.align_loss += d * d;
      ++ev.report.align_terms;
      if (with_grad) {
        const double lam = cfg.align_weight;
        sq_dist_egrad(hx, s, kappa, tmp);
        add_grad(row, tmp, lam);
        sq_dist_egrad(s, hx, kappa, gs);
        for (double& v : gs) v *= lam;
        std::fill(ga.begin(), ga.end(), 0.0);
        exp_origin_backward(a, gs, kappa, ga);
        adapter.backward(e, act, ga, ev.grad_adapter);
      }
    }
  } else {
    for (std::size_t row : touched) {
      if (semantic.is_user(row) && !cfg.align_users) continue;
      if (!semantic.has(row)) ++ev.report.align_skipped;
    }
  }
  ev.report.total = ev.report.margin_loss + cfg.align_weight * ev.report.align_loss;
  return ev;
}

/// Draws one HINS negative per observed pair.
inline std::vector<Triple> sample_triples(const EmbeddingTable& h, const InteractionGraph& g,
                                          std::span<const std::pair<NodeIndex, NodeIndex>> batch,
                                          std::size_t pool_size, std::mt19937_64& rng) {
  std::vector<Triple> out;
  out.reserve(batch.size());
  for (auto [u, i] : batch) out.push_back({u, i, hins_select(h, g, u, i, pool_size, rng)});
  return out;
}

/// HINS negatives + margin + alignment for a batch of observed pairs.
inline LossReport batch_loss(const EmbeddingTable& h, const InteractionGraph& g,
                             std::span<const std::pair<NodeIndex, NodeIndex>> batch, const SemanticIndex& semantic,
                             const Adapter& adapter, const LossConfig& cfg, std::mt19937_64& rng) {
  if (batch.empty()) throw ParameterError("batch_loss: empty batch");
  const auto triples = sample_triples(h, g, batch, cfg.negatives, rng);
  return evaluate_triples(h, triples, semantic, adapter, cfg, false).report;
}

}  // namespace herec
