#pragma once

// Read-only HTTP API over one immutable snapshot of model, tree and data.
// Handlers are plain functions of (state, request parameters) so they can be
// exercised without sockets.

#include <atomic>
#include <charconv>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "herec/checkpoint.hpp"
#include "herec/data.hpp"
#include "herec/hiercluster.hpp"
#include "herec/metrics.hpp"
#include "herec/pipeline.hpp"
#include "herec/recommend.hpp"

namespace herec {

inline constexpr std::size_t kDefaultServeK = 20;
inline constexpr std::size_t kMaxServeK = 200;
inline constexpr std::size_t kDefaultServeLayer = 1;

struct ServingState {
  Checkpoint checkpoint;
  InteractionGraph graph;
  EmbeddingTable embeddings;  // final (post message passing)
  HierarchyTree tree;
  std::optional<EvalReport> metrics;

  static ServingState build(Checkpoint c, InteractionGraph g, HierarchyTree t, bool with_metrics = true) {
    check_checkpoint_matches(c, g);
    if (t.user_count != g.user_count || t.item_count != g.item_count) {
      throw DimensionError("tree does not match the dataset");
    }
    ServingState s;
    s.embeddings = final_embeddings(c, g);
    if (with_metrics) s.metrics = evaluate_embeddings(s.embeddings, g, std::array<std::size_t, 2>{10, 20});
    s.checkpoint = std::move(c);
    s.graph = std::move(g);
    s.tree = std::move(t);
    return s;
  }
};

struct ApiResponse {
  int status = 200;
  std::string body;
  friend bool operator==(const ApiResponse&, const ApiResponse&) = default;
};

using QueryParams = std::map<std::string, std::string>;

namespace detail {

inline ApiResponse json_response(int status, const nlohmann::ordered_json& j) { return {status, j.dump()}; }

inline ApiResponse error_response(int status, const std::string& msg) {
  return json_response(status, nlohmann::ordered_json{{"error", msg}});
}

template <class T>
std::optional<T> parse_param(const QueryParams& q, const std::string& key) {
  auto it = q.find(key);
  if (it == q.end()) return std::nullopt;
  return parse_number<T>(it->second);
}

inline const ApiResponse& not_loaded() {
  static const ApiResponse r = error_response(503, "model not loaded");
  return r;
}

}  // namespace detail

/// "u12" and "i5" name user/item leaves; a bare number is a global leaf index.
inline std::optional<std::size_t> parse_leaf_id(const HierarchyTree& t, std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::size_t base = 0, limit = t.leaf_total();
  if (s.front() == 'u' || s.front() == 'i') {
    const bool user = s.front() == 'u';
    base = user ? 0 : t.user_count;
    limit = user ? t.user_count : t.item_count;
    s.remove_prefix(1);
  }
  auto id = detail::parse_number<std::size_t>(s);
  if (!id || *id >= limit) return std::nullopt;
  return base + *id;
}

inline ApiResponse handle_recommendations(const ServingState* st, std::string_view user_text, const QueryParams& q) {
  if (!st) return detail::not_loaded();
  auto user = detail::parse_number<NodeIndex>(user_text);
  if (!user || *user >= st->graph.user_count) return detail::error_response(404, "unknown user");
  std::size_t k = kDefaultServeK, layer = kDefaultServeLayer;
  double tau = 0.0;
  std::uint64_t seed = 0;
  if (q.count("k")) {
    auto v = detail::parse_param<std::size_t>(q, "k");
    if (!v || *v == 0 || *v > kMaxServeK) return detail::error_response(400, "k must be in [1, " + std::to_string(kMaxServeK) + "]");
    k = *v;
  }
  if (q.count("tau")) {
    auto v = detail::parse_param<double>(q, "tau");
    if (!v || !(*v >= 0.0 && *v <= 1.0)) return detail::error_response(400, "tau must be in [0, 1]");
    tau = *v;
  }
  if (q.count("layer")) {
    auto v = detail::parse_param<std::size_t>(q, "layer");
    if (!v || *v < 1 || *v > st->tree.leaf_layer) {
      return detail::error_response(400, "layer must be in [1, " + std::to_string(st->tree.leaf_layer) + "]");
    }
    layer = *v;
  }
  if (q.count("seed")) {
    auto v = detail::parse_param<std::uint64_t>(q, "seed");
    if (!v) return detail::error_response(400, "seed must be a nonnegative integer");
    seed = *v;
  }
  const auto list = explore_exploit(st->embeddings, st->graph, st->tree, *user, k, tau, layer, seed);
  nlohmann::ordered_json j;
  j["user"] = *user;
  j["k"] = k;
  j["tau"] = tau;
  j["layer"] = layer;
  auto items = nlohmann::ordered_json::array();
  for (const auto& r : list.items) {
    items.push_back({{"item_id", r.item}, {"score", r.score}, {"provenance", to_string(r.provenance)}});
  }
  j["items"] = std::move(items);
  return detail::json_response(200, j);
}

/// Leaf-to-root chain of {layer, node_index, sibling_leaf_count}, where the
/// count is the number of leaves under that node.
inline ApiResponse handle_tree_path(const ServingState* st, std::string_view leaf_text) {
  if (!st) return detail::not_loaded();
  const auto leaf = parse_leaf_id(st->tree, leaf_text);
  if (!leaf) return detail::error_response(404, "unknown leaf");
  const auto& t = st->tree;
  nlohmann::ordered_json j;
  j["leaf"] = *leaf;
  j["kind"] = *leaf < t.user_count ? "user" : "item";
  j["id"] = *leaf < t.user_count ? *leaf : *leaf - t.user_count;
  auto chain = nlohmann::ordered_json::array();
  std::size_t idx = *leaf;
  for (std::size_t l = t.leaf_layer;; --l) {
    const auto& node = t.layers[l][idx];
    chain.push_back({{"layer", l}, {"node_index", idx}, {"sibling_leaf_count", node.leaf_count}});
    if (l == t.top_layer) break;
    idx = static_cast<std::size_t>(node.parent);
  }
  j["path"] = std::move(chain);
  return detail::json_response(200, j);
}

inline ApiResponse handle_meta(const ServingState* st) {
  if (!st) return detail::not_loaded();
  nlohmann::ordered_json j;
  j["user_count"] = st->graph.user_count;
  j["item_count"] = st->graph.item_count;
  j["tree_layers"] = st->tree.leaf_layer;
  j["k_max"] = kMaxServeK;
  j["metric_summary"] = st->metrics ? to_json(*st->metrics) : nlohmann::ordered_json(nullptr);
  return detail::json_response(200, j);
}

/// httplib front end. The snapshot pointer is swapped once under a mutex;
/// handlers take a shared_ptr copy and never mutate it.
class Server {
 public:
  explicit Server(std::string static_dir = {}) : static_dir_(std::move(static_dir)) { install(); }

  void set_state(std::shared_ptr<const ServingState> s) {
    std::lock_guard lock(mu_);
    state_ = std::move(s);
  }

  std::shared_ptr<const ServingState> state() const {
    std::lock_guard lock(mu_);
    return state_;
  }

  bool listen(const std::string& host, int port) { return http_.listen(host, port); }
  int bind_to_any_port(const std::string& host) { return http_.bind_to_any_port(host); }
  bool listen_after_bind() { return http_.listen_after_bind(); }
  void stop() { http_.stop(); }
  void wait_until_ready() const { http_.wait_until_ready(); }

 private:
  static void send(httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json; charset=utf-8");
  }

  static QueryParams query(const httplib::Request& req) {
    QueryParams q;
    for (const auto& [k, v] : req.params) q.emplace(k, v);  // first value wins
    return q;
  }

  void install() {
    http_.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                               {"Access-Control-Allow-Methods", "GET, OPTIONS"},
                               {"Access-Control-Allow-Headers", "Content-Type"}});
    http_.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    http_.Get(R"(/api/users/([^/]+)/recommendations)", [this](const httplib::Request& req, httplib::Response& res) {
      auto s = state();
      send(res, handle_recommendations(s.get(), req.matches[1].str(), query(req)));
    });
    http_.Get(R"(/api/tree/path/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto s = state();
      send(res, handle_tree_path(s.get(), req.matches[1].str()));
    });
    http_.Get("/api/meta", [this](const httplib::Request&, httplib::Response& res) {
      auto s = state();
      send(res, handle_meta(s.get()));
    });
    if (!static_dir_.empty()) http_.set_mount_point("/", static_dir_);
  }

  std::string static_dir_;
  mutable std::mutex mu_;
  std::shared_ptr<const ServingState> state_;
  httplib::Server http_;
};

}  // namespace herec
