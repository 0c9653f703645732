#pragma once

// Training loop with early stopping, evaluation and hierarchy construction
// on top of a checkpoint.

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "herec/checkpoint.hpp"
#include "herec/data.hpp"
#include "herec/error.hpp"
#include "herec/hiercluster.hpp"
#include "herec/metrics.hpp"
#include "herec/model.hpp"
#include "herec/optim.hpp"
#include "herec/recommend.hpp"

namespace herec {

inline constexpr double kInitSigma = 0.1;
inline constexpr double kValidationFraction = 0.1;

struct TrainConfig {
  std::size_t dim = 50;
  std::size_t batch = 1024;
  std::size_t layers = 2;
  double lr = 5e-3;
  double weight_decay = 1e-3;
  std::size_t negatives = 20;
  double align_weight = 1e-2;
  std::size_t epochs = 100;
  std::size_t patience = 10;
  std::uint64_t seed = 0;

  void validate() const {
    if (dim < 2) throw ParameterError("config: dim must be >= 2");
    if (batch == 0) throw ParameterError("config: batch must be positive");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ParameterError("config: lr must be positive");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ParameterError("config: weight_decay must be >= 0");
    if (negatives == 0) throw ParameterError("config: negatives must be positive");
    if (!(align_weight >= 0.0) || !std::isfinite(align_weight)) throw ParameterError("config: align_weight must be >= 0");
    if (patience == 0) throw ParameterError("config: patience must be positive");
  }

  /// Sets one key from its text value; unknown keys and bad values throw.
  void set(std::string_view key, std::string_view value) {
    auto as_size = [&](std::size_t& out) {
      std::uint64_t v = 0;
      auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc{} || p != value.data() + value.size()) {
        throw ParameterError("config: bad integer for " + std::string(key) + ": " + std::string(value));
      }
      out = static_cast<std::size_t>(v);
    };
    auto as_double = [&](double& out) {
      try {
        std::size_t used = 0;
        out = std::stod(std::string(value), &used);
        if (used != value.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ParameterError("config: bad number for " + std::string(key) + ": " + std::string(value));
      }
    };
    if (key == "dim") as_size(dim);
    else if (key == "batch") as_size(batch);
    else if (key == "layers") as_size(layers);
    else if (key == "lr") as_double(lr);
    else if (key == "weight_decay") as_double(weight_decay);
    else if (key == "negatives") as_size(negatives);
    else if (key == "align_weight") as_double(align_weight);
    else if (key == "epochs") as_size(epochs);
    else if (key == "patience") as_size(patience);
    else if (key == "seed") {
      std::size_t s = 0;
      as_size(s);
      seed = s;
    } else {
      throw ParameterError("config: unknown key '" + std::string(key) + "'");
    }
  }

  nlohmann::ordered_json to_json() const {
    return {{"dim", dim},           {"batch", batch},       {"layers", layers},
            {"lr", lr},             {"weight_decay", weight_decay}, {"negatives", negatives},
            {"align_weight", align_weight}, {"epochs", epochs}, {"patience", patience},
            {"seed", seed}};
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// key=value lines; '#' starts a comment; blank lines ignored.
inline TrainConfig parse_config(std::istream& in, TrainConfig base = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = line;
    if (auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = detail::trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) throw ParseError("config: expected key=value", lineno);
    try {
      base.set(detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1)));
    } catch (const ParameterError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  base.validate();
  return base;
}

inline TrainConfig load_config(const std::string& path, TrainConfig base = {}) {
  auto in = detail::open_input(path);
  return parse_config(in, base);
}

/// Moves ceil(10%) of each user's train items (at least one kept) into the
/// test lists of a copy used for early stopping.
inline InteractionGraph validation_split(const InteractionGraph& g, std::uint64_t seed) {
  InteractionGraph v;
  v.user_count = g.user_count;
  v.item_count = g.item_count;
  v.train.assign(g.user_count, {});
  v.test.assign(g.user_count, {});
  for (NodeIndex u = 0; u < g.user_count; ++u) {
    auto items = g.train[u];
    if (items.size() < 2) {
      v.train[u] = items;
      continue;
    }
    auto hold = static_cast<std::size_t>(std::ceil(kValidationFraction * static_cast<double>(items.size()) - 1e-9));
    hold = std::min(hold, items.size() - 1);
    auto rng = detail::make_rng(seed, 0x5a11d000ULL + u);
    detail::shuffle(items, rng);
    v.test[u].assign(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(hold));
    v.train[u].assign(items.begin() + static_cast<std::ptrdiff_t>(hold), items.end());
    std::sort(v.test[u].begin(), v.test[u].end());
    std::sort(v.train[u].begin(), v.train[u].end());
  }
  v.rebuild_transpose();
  return v;
}

inline EmbeddingTable final_embeddings(const Checkpoint& c, const InteractionGraph& g) {
  return message_passing(c.h0, g, c.layers).final;
}

/// Mean Recall@k over users with held-out items, top_k excluding train.
inline double holdout_recall(const EmbeddingTable& h, const InteractionGraph& g, std::size_t k) {
  double s = 0.0;
  std::size_t n = 0;
  for (NodeIndex u = 0; u < g.user_count; ++u) {
    if (g.test[u].empty()) continue;
    const auto ids = top_k(h, g, u, k).item_ids();
    s += recall_at_k(ids, g.test[u], k);
    ++n;
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double margin_loss = 0.0;
  double align_loss = 0.0;
  double val_recall = 0.0;
  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochLog> log;  // entry 0 is the initial model (loss fields 0)
  std::size_t best_epoch = 0;
  double best_val_recall = 0.0;
  bool stopped_early = false;
};

struct TrainHooks {
  std::function<void(const EpochLog&)> on_epoch;
  std::function<void(const Checkpoint&)> on_best;
};

inline Checkpoint initial_checkpoint(const TrainConfig& cfg, const InteractionGraph& g, const SemanticVectors* sv) {
  Checkpoint c;
  c.layers = cfg.layers;
  c.h0 = init_embeddings(g.user_count, g.item_count, cfg.dim, kInitSigma, cfg.seed);
  if (sv && sv->dim > 0) c.adapter = Adapter::create(sv->dim, Adapter::kDefaultHidden, cfg.dim, cfg.seed);
  c.meta.seed = cfg.seed;
  c.meta.config = cfg.to_json();
  return c;
}

namespace detail {

inline void apply_weight_decay(const EmbeddingTable& h0, double wd, std::vector<double>& grad) {
  if (wd == 0.0) return;
  const std::size_t w = h0.width();
  const auto o = origin(h0.dim(), h0.kappa());
  std::vector<double> tmp(w);
  for (std::size_t r = 0; r < h0.rows(); ++r) {
    sq_dist_egrad(h0.row(r), o.coords(), h0.kappa(), tmp, 0.5 * wd);
    for (std::size_t k = 0; k < w; ++k) grad[r * w + k] += tmp[k];
  }
}

}  // namespace detail

/// Mini-batch training over shuffled observed pairs with one HINS negative
/// each; RSGD on the base embeddings, Adam on the adapter. Stops after
/// `patience` epochs without a strict improvement of validation Recall@10.
inline TrainResult train(const TrainConfig& cfg, const InteractionGraph& graph, const SemanticVectors* semantic,
                         const TrainHooks& hooks = {}) {
  cfg.validate();
  graph.validate();
  if (graph.train_size() == 0) throw ParameterError("train: graph has no training interactions");
  const auto g = validation_split(graph, cfg.seed);
  SemanticIndex index;
  if (semantic) index = SemanticIndex(*semantic, g.user_count, g.item_count);

  Checkpoint cur = initial_checkpoint(cfg, graph, semantic);
  AdamState adam;
  adam.lr = cfg.lr;
  LossConfig lc{cfg.negatives, cfg.align_weight, true};

  TrainResult res;
  res.best = cur;
  res.best_val_recall = holdout_recall(final_embeddings(cur, g), g, 10);
  res.log.push_back({0, 0.0, 0.0, 0.0, res.best_val_recall});
  if (hooks.on_epoch) hooks.on_epoch(res.log.back());
  if (hooks.on_best) hooks.on_best(res.best);

  std::vector<std::pair<NodeIndex, NodeIndex>> pairs;
  for (NodeIndex u = 0; u < g.user_count; ++u) {
    for (auto i : g.train[u]) pairs.emplace_back(u, i);
  }
  const std::size_t w = cur.h0.width();
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto rng = detail::make_rng(cfg.seed, 0xe90c0000ULL + epoch);
    detail::shuffle(pairs, rng);
    EpochLog log{epoch, 0.0, 0.0, 0.0, 0.0};
    for (std::size_t start = 0; start < pairs.size(); start += cfg.batch) {
      const std::span<const std::pair<NodeIndex, NodeIndex>> batch(
          pairs.data() + start, std::min(cfg.batch, pairs.size() - start));
      const auto prop = message_passing(cur.h0, g, cur.layers);
      const auto triples = sample_triples(prop.final, g, batch, cfg.negatives, rng);
      auto ev = evaluate_triples(prop.final, triples, index, cur.adapter, lc, true);
      if (!std::isfinite(ev.report.total)) {
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at pair " +
                             std::to_string(start) + " (margin " + std::to_string(ev.report.margin_loss) +
                             ", align " + std::to_string(ev.report.align_loss) + ")");
      }
      log.loss += ev.report.total;
      log.margin_loss += ev.report.margin_loss;
      log.align_loss += ev.report.align_loss;
      auto grad = message_passing_backward(cur.h0, g, prop, ev.grad_final);
      detail::apply_weight_decay(cur.h0, cfg.weight_decay, grad);
      for (std::size_t r = 0; r < cur.h0.rows(); ++r) {
        rsgd_step_inplace(cur.h0.row(r), ConstSpan(grad.data() + r * w, w), cfg.lr, cur.h0.kappa());
      }
      if (!cur.adapter.empty()) adapter_step(cur.adapter.params, ev.grad_adapter, adam);
    }
    log.val_recall = holdout_recall(final_embeddings(cur, g), g, 10);
    res.log.push_back(log);
    if (hooks.on_epoch) hooks.on_epoch(log);
    cur.meta.epochs_run = epoch;
    if (log.val_recall > res.best_val_recall) {
      res.best = cur;
      res.best_val_recall = log.val_recall;
      res.best_epoch = epoch;
      stale = 0;
      res.best.meta.best_epoch = epoch;
      res.best.meta.best_val_recall = log.val_recall;
      if (hooks.on_best) hooks.on_best(res.best);
    } else if (++stale >= cfg.patience) {
      res.stopped_early = true;
      break;
    }
  }
  res.best.meta.epochs_run = res.log.size() - 1;
  res.best.meta.best_epoch = res.best_epoch;
  res.best.meta.best_val_recall = res.best_val_recall;
  return res;
}

inline void check_checkpoint_matches(const Checkpoint& c, const InteractionGraph& g) {
  if (c.h0.user_count() != g.user_count || c.h0.item_count() != g.item_count) {
    throw DimensionError("checkpoint has " + std::to_string(c.h0.user_count()) + " users / " +
                         std::to_string(c.h0.item_count()) + " items; data has " + std::to_string(g.user_count) +
                         " / " + std::to_string(g.item_count));
  }
}

inline EvalReport evaluate_embeddings(const EmbeddingTable& h, const InteractionGraph& g,
                                      std::span<const std::size_t> ks) {
  std::size_t kmax = 0;
  for (auto k : ks) kmax = std::max(kmax, k);
  std::vector<std::vector<NodeIndex>> lists(g.user_count);
  for (NodeIndex u = 0; u < g.user_count; ++u) {
    if (!g.test[u].empty()) lists[u] = top_k(h, g, u, kmax).item_ids();
  }
  return evaluate_lists(lists, g, h, ks);
}

inline EvalReport evaluate(const Checkpoint& c, const InteractionGraph& g,
                           std::span<const std::size_t> ks = std::array<std::size_t, 2>{10, 20}) {
  check_checkpoint_matches(c, g);
  return evaluate_embeddings(final_embeddings(c, g), g, ks);
}

/// Most-popular baseline scored with the same metric suite.
inline EvalReport evaluate_most_popular(const InteractionGraph& g, const EmbeddingTable& h,
                                        std::span<const std::size_t> ks) {
  std::size_t kmax = 0;
  for (auto k : ks) kmax = std::max(kmax, k);
  std::vector<std::vector<NodeIndex>> lists(g.user_count);
  for (NodeIndex u = 0; u < g.user_count; ++u) {
    if (!g.test[u].empty()) lists[u] = most_popular(g, u, kmax).item_ids();
  }
  return evaluate_lists(lists, g, h, ks);
}

inline HierarchyTree cluster(const Checkpoint& c, const InteractionGraph& g, std::uint64_t seed,
                             std::vector<std::string>* warnings = nullptr) {
  check_checkpoint_matches(c, g);
  return build_hierarchy(final_embeddings(c, g), seed, {}, warnings);
}

}  // namespace herec
