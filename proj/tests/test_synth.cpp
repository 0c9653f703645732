#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "herec/data.hpp"
#include "herec/error.hpp"
#include "herec/synth.hpp"

using namespace herec;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

InteractionGraph full_graph(const SynthDataset& ds, std::size_t users, std::size_t items) {
  InteractionGraph g;
  g.user_count = users;
  g.item_count = items;
  g.train.assign(users, {});
  g.test.assign(users, {});
  for (auto [u, i] : ds.interactions) g.train[u].push_back(i);
  g.rebuild_transpose();
  return g;
}

}  // namespace

TEST(GenSynth, ShapeAndCounts) {
  const SynthOptions o;
  const auto ds = generate_synth(o);
  EXPECT_EQ(ds.depth, 4u);  // ceil(log2(300 / 20))
  EXPECT_EQ(ds.leaf_count, 16u);
  EXPECT_EQ(ds.user_leaf.size(), o.users);
  EXPECT_EQ(ds.item_leaf.size(), o.items);
  EXPECT_EQ(ds.semantic.dim, ds.depth * o.branching);
  EXPECT_EQ(ds.semantic.size(), o.users + o.items);
  EXPECT_EQ(*ds.manifest.interactions, ds.interactions.size());

  std::vector<std::size_t> per_user(o.users, 0);
  for (auto [u, i] : ds.interactions) {
    ASSERT_LT(u, o.users);
    ASSERT_LT(i, o.items);
    ++per_user[u];
  }
  for (auto n : per_user) {
    EXPECT_GE(n, o.min_per_user);
    EXPECT_LE(n, o.max_per_user);
  }
  EXPECT_TRUE(std::is_sorted(ds.interactions.begin(), ds.interactions.end()));
  EXPECT_EQ(std::adjacent_find(ds.interactions.begin(), ds.interactions.end()), ds.interactions.end());
}

TEST(GenSynth, LeavesAreBalanced) {
  const auto ds = generate_synth({});
  std::vector<std::size_t> users(ds.leaf_count, 0), items(ds.leaf_count, 0);
  for (auto l : ds.user_leaf) ++users[l];
  for (auto l : ds.item_leaf) ++items[l];
  for (std::size_t l = 0; l < ds.leaf_count; ++l) {
    EXPECT_LE(users[l], 200 / 16 + 1);
    EXPECT_GE(users[l], 200 / 16);
    EXPECT_LE(items[l], 300 / 16 + 1);
    EXPECT_GE(items[l], 300 / 16);
  }
}

TEST(GenSynth, ZeroNoiseIsBlockStructured) {
  SynthOptions o;
  o.noise = 0.0;
  const auto ds = generate_synth(o);
  for (auto [u, i] : ds.interactions) EXPECT_EQ(ds.user_leaf[u], ds.item_leaf[i]);
  // Semantic rows are exact path one-hots.
  for (const auto& [node, v] : ds.semantic.rows) {
    double s = 0.0;
    for (double x : v) {
      EXPECT_TRUE(x == 0.0 || x == 1.0);
      s += x;
    }
    EXPECT_EQ(s, static_cast<double>(ds.depth));
  }
}

TEST(GenSynth, NoiseAddsCrossLeafInteractions) {
  SynthOptions o;
  o.noise = 0.3;
  const auto ds = generate_synth(o);
  std::size_t cross = 0;
  for (auto [u, i] : ds.interactions) cross += ds.user_leaf[u] != ds.item_leaf[i];
  EXPECT_GT(cross, 0u);
  EXPECT_LT(cross, ds.interactions.size() / 2);
}

TEST(GenSynth, SemanticCodesShareAncestors) {
  // Leaf codes are per-level one-hots of the binary digits of the leaf index.
  SynthOptions o;
  o.noise = 0.0;
  const auto ds = generate_synth(o);
  const auto a = detail::path_code(4, ds.depth, 2);
  const auto b = detail::path_code(5, ds.depth, 2);
  const auto c = detail::path_code(7, ds.depth, 2);
  auto agree = [&](const std::vector<double>& x, const std::vector<double>& y) {
    std::size_t levels = 0;
    for (std::size_t d = 0; d < ds.depth; ++d) levels += x[2 * d] == y[2 * d] && x[2 * d + 1] == y[2 * d + 1];
    return levels;
  };
  EXPECT_EQ(agree(a, b), ds.depth - 1);
  EXPECT_EQ(agree(a, c), ds.depth - 2);  // 0100 vs 0111
}

TEST(GenSynth, LongTailHoldsMostItems) {
  const SynthOptions o;
  const auto ds = generate_synth(o);
  const auto g = full_graph(ds, o.users, o.items);
  const auto st = head_tail_split(g);
  EXPECT_GE(static_cast<double>(st.tail.size()) / static_cast<double>(o.items), 0.5);
  // Popularity is skewed: the head holds more than its 20% share of interactions.
  std::size_t head = 0;
  for (auto i : st.head) head += st.item_train_counts[i];
  EXPECT_GT(static_cast<double>(head) / static_cast<double>(g.train_size()), 0.2);
}

TEST(GenSynth, DeterministicPerSeed) {
  SynthOptions o;
  o.seed = 17;
  const auto a = generate_synth(o);
  const auto b = generate_synth(o);
  EXPECT_EQ(a.interactions, b.interactions);
  EXPECT_EQ(a.semantic.rows, b.semantic.rows);
  o.seed = 18;
  EXPECT_NE(generate_synth(o).interactions, a.interactions);
}

TEST(GenSynth, RejectsBadOptions) {
  auto bad = [](auto edit) {
    SynthOptions o;
    edit(o);
    return o;
  };
  EXPECT_THROW(generate_synth(bad([](SynthOptions& o) { o.users = 0; })), ParameterError);
  EXPECT_THROW(generate_synth(bad([](SynthOptions& o) { o.items = 0; })), ParameterError);
  EXPECT_THROW(generate_synth(bad([](SynthOptions& o) { o.branching = 1; })), ParameterError);
  EXPECT_THROW(generate_synth(bad([](SynthOptions& o) { o.noise = 1.5; })), ParameterError);
  EXPECT_THROW(generate_synth(bad([](SynthOptions& o) { o.max_per_user = 2; })), ParameterError);
}

TEST(GenSynth, HigherBranching) {
  SynthOptions o;
  o.branching = 3;
  o.noise = 0.0;
  const auto ds = generate_synth(o);
  EXPECT_EQ(ds.depth, 3u);  // ceil(log3 15)
  EXPECT_EQ(ds.leaf_count, 27u);
  for (auto [u, i] : ds.interactions) EXPECT_EQ(ds.user_leaf[u], ds.item_leaf[i]);
}

TEST(WriteSynth, FilesParseBackAndAreStable) {
  const auto dir = std::filesystem::temp_directory_path() / ("herec_synth_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  SynthOptions o;
  o.users = 30;
  o.items = 40;
  o.seed = 2;
  const auto ds = generate_synth(o);
  const auto p = write_synth(dir.string(), ds);

  const auto m = load_manifest(p.manifest);
  EXPECT_EQ(*m.user_count, 30u);
  EXPECT_EQ(*m.item_count, 40u);
  const auto g = load_interactions(p.interactions, 0.8, 0, &m);
  EXPECT_EQ(g.train_size() + g.test_size(), ds.interactions.size());
  const auto sv = load_semantic_vectors(p.semantic);
  EXPECT_EQ(sv.dim, ds.semantic.dim);
  EXPECT_EQ(sv.size(), ds.semantic.size());
  for (const auto& [node, v] : ds.semantic.rows) {
    const auto* back = sv.find(node.kind, node.id);
    ASSERT_NE(back, nullptr);
    for (std::size_t k = 0; k < v.size(); ++k) EXPECT_NEAR((*back)[k], v[k], 1e-8);
  }

  const auto first = slurp(p.interactions) + slurp(p.semantic) + slurp(p.manifest);
  write_synth(dir.string(), generate_synth(o));
  EXPECT_EQ(slurp(p.interactions) + slurp(p.semantic) + slurp(p.manifest), first);
  std::filesystem::remove_all(dir);
}
