#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "herec/data.hpp"
#include "herec/hiercluster.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("herec_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "train.cfg") << "dim=8\nbatch=256\nnegatives=5\nepochs=4\nseed=3\n";
    ASSERT_EQ(run("gen-synth --users 200 --items 300 --seed 2 --out " + path("data")).code, 0);
    ASSERT_EQ(run("train --data " + path("data") + " --config " + path("train.cfg") + " --out " + path("m.ckpt")).code, 0);
    ASSERT_EQ(run("cluster --data " + path("data") + " --checkpoint " + path("m.ckpt") + " --tree " + path("t.json")).code, 0);
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static std::string path(const std::string& name) { return (dir_ / name).string(); }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
  }

  static Outcome run(const std::string& args) {
    const auto out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = std::string(HEREC_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    Outcome r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  static std::string ckpt_args() { return "--data " + path("data") + " --checkpoint " + path("m.ckpt"); }

  static inline fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenSynthIsDeterministic) {
  ASSERT_EQ(run("gen-synth --users 200 --items 300 --seed 2 --out " + path("again")).code, 0);
  for (const char* f : {"interactions.tsv", "semantic.tsv", "manifest.txt"}) {
    EXPECT_EQ(slurp(dir_ / "again" / f), slurp(dir_ / "data" / f)) << f;
  }
}

TEST_F(Cli, TrainLogsResolvedConfigAndWritesSidecar) {
  const auto r = run("train --data " + path("data") + " --config " + path("train.cfg") + " --seed 3 --out " +
                     path("m2.ckpt"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE((r.out + r.err).find("\"dim\":8"), std::string::npos);
  EXPECT_EQ(slurp(path("m2.ckpt")), slurp(path("m.ckpt")));
  const auto meta = json::parse(slurp(path("m2.ckpt.json")));
  EXPECT_EQ(meta["dim"], 8);
  EXPECT_EQ(meta["config"]["seed"], 3);
}

TEST_F(Cli, EvalJsonHasBothCutoffs) {
  const auto r = run("eval --json " + ckpt_args());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  ASSERT_EQ(j["metrics"].size(), 2u);
  EXPECT_EQ(j["metrics"][0]["k"], 10);
  EXPECT_EQ(j["metrics"][1]["k"], 20);
  const auto table = run("eval " + ckpt_args());
  EXPECT_EQ(table.code, 0);
  EXPECT_NE(table.out.find("Recall"), std::string::npos);
}

TEST_F(Cli, RecommendTauZeroMatchesPlainRanking) {
  const auto plain = run("recommend --json --user 4 --k 10 " + ckpt_args());
  const auto tree = run("recommend --json --user 4 --k 10 --tau 0 --tree " + path("t.json") + " " + ckpt_args());
  ASSERT_EQ(plain.code, 0) << plain.err;
  ASSERT_EQ(tree.code, 0) << tree.err;
  EXPECT_EQ(json::parse(plain.out)["items"], json::parse(tree.out)["items"]);
}

// First user whose layer-5 subtree holds at least 10 unseen items.
std::size_t user_with_room(const std::string& data_dir, const std::string& tree_path) {
  std::ifstream tin(tree_path);
  const auto tree = herec::tree_from_json(json::parse(tin));
  const auto m = herec::load_manifest((fs::path(data_dir) / "manifest.txt").string());
  const auto g = herec::load_interactions((fs::path(data_dir) / "interactions.tsv").string(), 0.8, 3, &m);
  for (herec::NodeIndex u = 0; u < g.user_count; ++u) {
    std::size_t pool = 0;
    for (auto leaf : tree.leaves_under(5, tree.ancestor(u, 5))) {
      if (leaf >= tree.user_count && !g.in_train(u, static_cast<herec::NodeIndex>(leaf - tree.user_count))) ++pool;
    }
    if (pool >= 10) return u;
  }
  return g.user_count;
}

TEST_F(Cli, RecommendJsonMatchesTable) {
  const auto user = user_with_room(path("data"), path("t.json"));
  ASSERT_LT(user, 200u);
  const std::string args = "--user " + std::to_string(user) + " --k 10 --tau 0.5 --layer 5 --seed 1 --tree " + path("t.json") + " " + ckpt_args();
  const auto j = json::parse(run("recommend --json " + args).out);
  const auto table = run("recommend " + args).out;
  std::istringstream in(table);
  std::string header, line;
  std::getline(in, header);
  std::size_t row = 0, explored = 0;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::size_t rank = 0, item = 0;
    double score = 0.0;
    std::string prov;
    ls >> rank >> item >> score >> prov;
    ASSERT_LT(row, j["items"].size());
    EXPECT_EQ(rank, row + 1);
    EXPECT_EQ(item, j["items"][row]["item_id"].get<std::size_t>());
    EXPECT_NEAR(score, j["items"][row]["score"].get<double>(), 1e-6);
    EXPECT_EQ(prov, j["items"][row]["provenance"].get<std::string>());
    explored += prov == "explored";
    ++row;
  }
  EXPECT_EQ(row, 10u);
  EXPECT_EQ(explored, 5u);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("recommend --user 999 " + ckpt_args()).code, 2);
  EXPECT_EQ(run("recommend --user 0 --bogus " + ckpt_args()).code, 1);
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("eval --data " + path("data") + " --checkpoint " + path("missing.ckpt")).code, 2);
  EXPECT_EQ(run("recommend --user 0 --tau 0.5 " + ckpt_args()).code, 1);
  std::ofstream(path("bad.cfg")) << "dim=8\nfoo=1\n";
  const auto bad = run("train --data " + path("data") + " --config " + path("bad.cfg"));
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("line 2"), std::string::npos);
}

TEST_F(Cli, VerifyWritesGridAndSummary) {
  const auto r = run("verify");
  std::istringstream in(r.out);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 65u);
  EXPECT_NE(r.err.find("euclidean magnitude constant 1: PASS"), std::string::npos);
  const bool overall = r.err.find("overall: PASS") != std::string::npos;
  EXPECT_EQ(r.code, overall ? 0 : 3);
}
