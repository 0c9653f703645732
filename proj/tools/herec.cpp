// herec: train, evaluate, cluster, recommend, verify, serve, gen-synth.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "herec/checkpoint.hpp"
#include "herec/data.hpp"
#include "herec/hiercluster.hpp"
#include "herec/metrics.hpp"
#include "herec/pipeline.hpp"
#include "herec/recommend.hpp"
#include "herec/server.hpp"
#include "herec/synth.hpp"
#include "herec/verify.hpp"

namespace fs = std::filesystem;
using namespace herec;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("herec");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("HEREC_LOG");
  const std::string level = env ? env : "info";
  if (level == "error") spdlog::set_level(spdlog::level::err);
  else if (level == "warn") spdlog::set_level(spdlog::level::warn);
  else if (level == "debug") spdlog::set_level(spdlog::level::debug);
  else spdlog::set_level(spdlog::level::info);
}

struct Options {
  std::string data;
  std::string semantic;
  std::string config;
  std::string checkpoint;
  std::string tree;
  std::optional<std::size_t> user;
  std::size_t k = 10;
  double tau = 0.0;
  std::optional<std::size_t> layer;
  std::optional<std::uint64_t> seed;
  bool json = false;
  std::string out;
  std::string addr = "127.0.0.1:8080";
  std::string static_dir;
  std::size_t users = 200;
  std::size_t items = 300;
  std::size_t branching = 2;
  double noise = 0.1;
};

// --data may name the interactions file or a directory from gen-synth.
struct DataFiles {
  std::string interactions;
  std::string semantic;
  std::string manifest;
};

DataFiles resolve_data(const Options& o) {
  if (o.data.empty()) throw UsageError("--data is required");
  DataFiles f;
  if (fs::is_directory(o.data)) {
    const auto p = synth_paths(o.data);
    f.interactions = p.interactions;
    if (fs::exists(p.semantic)) f.semantic = p.semantic;
    if (fs::exists(p.manifest)) f.manifest = p.manifest;
  } else {
    f.interactions = o.data;
    const auto m = fs::path(o.data).parent_path() / "manifest.txt";
    if (fs::exists(m)) f.manifest = m.string();
  }
  if (!o.semantic.empty()) f.semantic = o.semantic;
  return f;
}

InteractionGraph load_graph(const DataFiles& f, double ratio, std::uint64_t seed) {
  std::optional<DatasetManifest> m;
  if (!f.manifest.empty()) m = load_manifest(f.manifest);
  auto g = load_interactions(f.interactions, ratio, seed, m ? &*m : nullptr);
  spdlog::info("loaded {} users, {} items, {} train / {} test interactions ({} duplicates removed)", g.user_count,
               g.item_count, g.train_size(), g.test_size(), g.duplicates_removed);
  return g;
}

Checkpoint require_checkpoint(const Options& o) {
  if (o.checkpoint.empty()) throw UsageError("--checkpoint is required");
  return load_checkpoint(o.checkpoint);
}

// The graph is re-split with the seed and ratio recorded at training time.
InteractionGraph graph_for(const Options& o, const Checkpoint& c) {
  return load_graph(resolve_data(o), c.meta.split_ratio, c.meta.seed);
}

HierarchyTree load_tree(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  try {
    return tree_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("tree file: ") + e.what());
  }
}

void emit(const Options& o, const std::string& text) {
  if (o.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream os(o.out, std::ios::trunc);
  if (!os) throw Error("cannot write " + o.out);
  os << text;
}

int cmd_gen_synth(const Options& o) {
  if (o.out.empty()) throw UsageError("--out DIR is required");
  SynthOptions so;
  so.users = o.users;
  so.items = o.items;
  so.branching = o.branching;
  so.noise = o.noise;
  so.seed = o.seed.value_or(0);
  spdlog::info("gen-synth users={} items={} branching={} noise={} seed={}", so.users, so.items, so.branching,
               so.noise, so.seed);
  const auto ds = generate_synth(so);
  const auto p = write_synth(o.out, ds);
  spdlog::info("wrote {} interactions (tree depth {}) to {}", ds.interactions.size(), ds.depth, p.interactions);
  return kExitOk;
}

int cmd_train(const Options& o) {
  TrainConfig cfg;
  if (!o.config.empty()) cfg = load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  const std::string out = !o.out.empty() ? o.out : (!o.checkpoint.empty() ? o.checkpoint : "herec.ckpt");
  spdlog::info("config {}", cfg.to_json().dump());
  const auto files = resolve_data(o);
  const auto g = load_graph(files, 0.8, cfg.seed);
  std::optional<SemanticVectors> sv;
  if (!files.semantic.empty()) {
    sv = load_semantic_vectors(files.semantic);
    spdlog::info("semantic vectors: {} rows of dim {}", sv->rows.size(), sv->dim);
  }
  TrainHooks hooks;
  hooks.on_epoch = [](const EpochLog& l) {
    spdlog::info("epoch {:>3} loss {:.6f} margin {:.6f} align {:.6f} val_recall@10 {:.4f}", l.epoch, l.loss,
                 l.margin_loss, l.align_loss, l.val_recall);
  };
  // Keep the best checkpoint on disk as training goes, so an abort leaves the last good one.
  hooks.on_best = [&](const Checkpoint& c) {
    Checkpoint copy = c;
    copy.meta.data_path = o.data;
    save_checkpoint(out, copy);
  };
  auto res = train(cfg, g, sv ? &*sv : nullptr, hooks);
  res.best.meta.data_path = o.data;
  save_checkpoint(out, res.best);
  spdlog::info("best epoch {} val_recall@10 {:.4f}; checkpoint {}", res.best_epoch, res.best_val_recall, out);
  return kExitOk;
}

int cmd_eval(const Options& o) {
  const auto c = require_checkpoint(o);
  const auto g = graph_for(o, c);
  const auto rep = evaluate(c, g);
  emit(o, o.json ? to_json(rep).dump(2) + "\n" : to_table(rep));
  return kExitOk;
}

int cmd_cluster(const Options& o) {
  const auto c = require_checkpoint(o);
  const auto g = graph_for(o, c);
  std::vector<std::string> warnings;
  const auto tree = cluster(c, g, o.seed.value_or(0), &warnings);
  for (const auto& w : warnings) spdlog::warn("{}", w);
  spdlog::info("tree with {} leaves, layers {}..{}, Dasgupta cost {}", tree.leaf_total(), tree.top_layer,
               tree.leaf_layer, dasgupta_cost(tree, g));
  const std::string text = tree_to_json(tree).dump(1) + "\n";
  if (!o.out.empty() || !o.tree.empty()) {
    Options w = o;
    if (w.out.empty()) w.out = o.tree;
    emit(w, text);
  } else {
    std::cout << text;
  }
  return kExitOk;
}

int cmd_recommend(const Options& o) {
  if (!o.user) throw UsageError("--user is required");
  if (o.k == 0) throw UsageError("--k must be positive");
  const auto c = require_checkpoint(o);
  const auto g = graph_for(o, c);
  if (*o.user >= g.user_count) throw LookupError("unknown user " + std::to_string(*o.user));
  const auto h = final_embeddings(c, g);
  const auto user = static_cast<NodeIndex>(*o.user);
  RecommendationList list;
  std::size_t layer = 0;
  if (o.tree.empty()) {
    if (o.tau != 0.0) throw UsageError("--tau > 0 needs --tree");
    list = top_k(h, g, user, o.k);
  } else {
    const auto tree = load_tree(o.tree);
    layer = o.layer.value_or(kDefaultServeLayer);
    list = explore_exploit(h, g, tree, user, o.k, o.tau, layer, o.seed.value_or(0));
  }
  std::ostringstream os;
  if (o.json) {
    nlohmann::ordered_json j;
    j["user"] = list.user;
    j["k"] = o.k;
    j["tau"] = o.tau;
    if (!o.tree.empty()) j["layer"] = layer;
    auto items = nlohmann::ordered_json::array();
    for (const auto& r : list.items) {
      items.push_back({{"item_id", r.item}, {"score", r.score}, {"provenance", to_string(r.provenance)}});
    }
    j["items"] = std::move(items);
    os << j.dump(2) << '\n';
  } else {
    os << std::setw(5) << "rank" << std::setw(10) << "item" << std::setw(16) << "score" << "  provenance\n";
    for (std::size_t r = 0; r < list.items.size(); ++r) {
      const auto& it = list.items[r];
      os << std::setw(5) << r + 1 << std::setw(10) << it.item << std::setw(16) << std::setprecision(8) << it.score
         << "  " << to_string(it.provenance) << '\n';
    }
  }
  emit(o, os.str());
  return kExitOk;
}

int cmd_verify(const Options& o) {
  const auto grid = error_bound_grid(default_grid_norms(), default_grid_thetas());
  std::ostringstream csv;
  write_probe_csv(csv, grid);
  emit(o, csv.str());
  const auto s = verify_summary(grid);
  const auto& r = s.reference;
  std::cerr << std::setprecision(6) << "reference |x|=|y|=5 theta=pi/2: exact " << r.exact << " approx " << r.approx
            << " fd " << r.fd << " rel_err " << r.rel_err * 100.0 << "% bound " << r.bound * 100.0 << "%\n"
            << "reference within 2.1% + 0.5pp: " << (s.reference_within_slack ? "PASS" : "FAIL") << '\n'
            << "euclidean magnitude constant 1: " << (s.euclidean_constant ? "PASS" : "FAIL") << '\n'
            << "hyperbolic magnitude decreasing in |x|: " << (s.adaptive ? "PASS" : "FAIL") << '\n'
            << "bound holds on grid: " << s.grid_bound_holds << "/" << s.grid_points << ' '
            << (s.grid_bound_holds == s.grid_points ? "PASS" : "FAIL") << '\n'
            << "overall: " << (s.passed() ? "PASS" : "FAIL") << '\n';
  return s.passed() ? kExitOk : kExitNumerical;
}

std::pair<std::string, int> split_addr(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw UsageError("--addr must be host:port");
  auto port = detail::parse_number<int>(std::string_view(addr).substr(colon + 1));
  if (!port || *port < 0 || *port > 65535) throw UsageError("--addr has a bad port");
  return {addr.substr(0, colon), *port};
}

int cmd_serve(const Options& o) {
  if (o.tree.empty()) throw UsageError("--tree is required");
  const auto [host, port] = split_addr(o.addr);
  Server server(o.static_dir);
  auto c = require_checkpoint(o);
  auto g = graph_for(o, c);
  auto t = load_tree(o.tree);
  server.set_state(std::make_shared<const ServingState>(ServingState::build(std::move(c), std::move(g), std::move(t))));
  spdlog::info("serving on {}:{}", host, port);
  if (!server.listen(host, port)) throw Error("cannot listen on " + o.addr);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Hyperbolic recommender: training, evaluation, hierarchy and serving"};
  app.require_subcommand(1);
  Options o;

  auto add_data = [&](CLI::App* s) {
    s->add_option("--data", o.data, "interactions file or gen-synth directory");
    s->add_option("--semantic", o.semantic, "semantic vectors file");
  };
  auto add_ckpt = [&](CLI::App* s) { s->add_option("--checkpoint", o.checkpoint, "checkpoint path"); };
  auto add_seed = [&](CLI::App* s) { s->add_option("--seed", o.seed, "random seed"); };
  auto add_out = [&](CLI::App* s) { s->add_option("--out", o.out, "output path"); };

  auto* train = app.add_subcommand("train", "train a model");
  add_data(train);
  train->add_option("--config", o.config, "key=value config file");
  add_ckpt(train);
  add_seed(train);
  add_out(train);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_data(eval);
  add_ckpt(eval);
  eval->add_flag("--json", o.json, "JSON output");
  add_out(eval);

  auto* clus = app.add_subcommand("cluster", "build the hierarchy tree");
  add_data(clus);
  add_ckpt(clus);
  add_seed(clus);
  clus->add_option("--tree", o.tree, "tree output path");
  add_out(clus);

  auto* rec = app.add_subcommand("recommend", "recommend items for a user");
  add_data(rec);
  add_ckpt(rec);
  rec->add_option("--tree", o.tree, "tree JSON (enables exploration)");
  rec->add_option("--user", o.user, "user id");
  rec->add_option("--k", o.k, "list length");
  rec->add_option("--tau", o.tau, "exploration share in [0, 1]");
  rec->add_option("--layer", o.layer, "exploration layer");
  add_seed(rec);
  rec->add_flag("--json", o.json, "JSON output");
  add_out(rec);

  auto* ver = app.add_subcommand("verify", "gradient-magnitude probes");
  add_out(ver);

  auto* serve = app.add_subcommand("serve", "HTTP API");
  add_data(serve);
  add_ckpt(serve);
  serve->add_option("--tree", o.tree, "tree JSON");
  serve->add_option("--addr", o.addr, "host:port");
  serve->add_option("--static", o.static_dir, "directory served under /");

  auto* gen = app.add_subcommand("gen-synth", "generate a synthetic dataset");
  gen->add_option("--users", o.users, "user count");
  gen->add_option("--items", o.items, "item count");
  gen->add_option("--branching", o.branching, "latent tree branching");
  gen->add_option("--noise", o.noise, "off-leaf probability and semantic noise");
  add_seed(gen);
  add_out(gen);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*clus) return cmd_cluster(o);
    if (*rec) return cmd_recommend(o);
    if (*ver) return cmd_verify(o);
    if (*serve) return cmd_serve(o);
    if (*gen) return cmd_gen_synth(o);
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const ParameterError& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const NumericalError& e) {
    spdlog::error("numerical failure: {}", e.what());
    return kExitNumerical;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitData;
  }
  return kExitUsage;
}
