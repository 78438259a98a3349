#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(CHEMREL_CLI) + " " + args + " 2>/dev/null";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// One small trained model shared by the tests in this file.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "chemrel_cli_test";
    fs::remove_all(root_);
    fs::create_directories(root_);
    std::ofstream(root_ / "quick.cfg") << "data.path = " << CHEMREL_DATA << "/huuskonen_solubility.csv\n"
                                       << "model.head_dim = 4\nmodel.ffn_dim = 16\nmodel.head_hidden = 8\n"
                                       << "train.epochs = 1\n";
    train_code_ = run("train --config " + (root_ / "quick.cfg").string() + " --out " + (root_ / "run").string()).code;
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::string path(const std::string& name) { return (root_ / name).string(); }

  static inline fs::path root_;
  static inline int train_code_ = -1;
};

}  // namespace

TEST_F(Cli, TokenizeAndParse) {
  const auto t = run("tokenize 'OCC(O)=O' --solvent CCO");
  EXPECT_EQ(t.code, 0);
  EXPECT_EQ(t.out, "<REG> O C C ( O ) = O <SEP> C C O\n");
  EXPECT_EQ(run("tokenize ''").code, 2);
  const auto p = run("parse 'c1ccccc1O'");
  EXPECT_EQ(p.code, 0);
  EXPECT_EQ(p.out.rfind("atoms 7 bonds 7 ring_closures 1", 0), 0u) << p.out;
  EXPECT_EQ(run("parse 'CC)C'").code, 1);
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("frobnicate").code, 2);
  std::ofstream(path("missing.cfg")) << "data.path = no_such.csv\n";
  EXPECT_EQ(run("train --config " + path("missing.cfg") + " --out " + path("never")).code, 2);
  std::ofstream(path("unknown.cfg")) << "data.path = no_such.csv\nmodel.colour = red\n";
  EXPECT_EQ(run("train --config " + path("unknown.cfg") + " --out " + path("never")).code, 2);
  EXPECT_FALSE(fs::exists(path("never")));
}

TEST_F(Cli, TrainWritesArtifactsAndManifest) {
  ASSERT_EQ(train_code_, 0);
  for (const char* f : {"model.ckpt", "training_log.csv", "split.json", "metrics.json", "run_manifest.json"})
    EXPECT_TRUE(fs::exists(path("run/") + f)) << f;
  const auto manifest = json::parse(slurp(path("run/run_manifest.json")));
  EXPECT_EQ(manifest.at("version"), "0.1.0");
  EXPECT_EQ(manifest.at("command"), "train");
  EXPECT_EQ(manifest.at("config").at("model.head_dim"), "4");
  for (const auto& o : manifest.at("outputs")) EXPECT_TRUE(fs::exists(path("run/") + o.at("path").get<std::string>()));
  EXPECT_EQ(slurp(path("run/run_manifest.json")).find("time"), std::string::npos);
}

TEST_F(Cli, ExplainPairTokenSequence) {
  ASSERT_EQ(train_code_, 0);
  const auto r = run("explain " + path("run/model.ckpt") + " 'OCC(O)=O' --solvent CCO --temp 298 --out " + path("ex"));
  ASSERT_EQ(r.code, 0);
  const auto doc = json::parse(slurp(path("ex/relevance.json")));
  std::string texts;
  for (const auto& t : doc.at("tokens")) texts += t.at("text").get<std::string>() + " ";
  EXPECT_EQ(texts, "<REG> O C C ( O ) = O <SEP> C C O ");
  EXPECT_EQ(doc.at("atoms").size(), 8u);
  for (const char* f : {"molecule.svg", "attention_layers.svg", "relevance_matrix.svg", "run_manifest.json"})
    EXPECT_TRUE(fs::exists(path("ex/") + f)) << f;
}

TEST_F(Cli, InvalidSmilesLeavesNoFiles) {
  ASSERT_EQ(train_code_, 0);
  EXPECT_EQ(run("explain " + path("run/model.ckpt") + " 'CC(C' --out " + path("bad")).code, 1);
  EXPECT_FALSE(fs::exists(path("bad")));
}

TEST_F(Cli, EvaluateRenderAndReplay) {
  ASSERT_EQ(train_code_, 0);
  const std::string data = std::string(CHEMREL_DATA) + "/huuskonen_solubility.csv";
  ASSERT_EQ(run("evaluate " + path("run/model.ckpt") + " " + data + " --split " + path("run/split.json") + " --out " +
                path("ev"))
                .code,
            0);
  EXPECT_TRUE(fs::exists(path("ev/parity.svg")));
  EXPECT_EQ(run("render --predictions " + path("ev/predictions.csv") + " --out " + path("rp")).code, 0);
  EXPECT_TRUE(fs::exists(path("rp/parity.svg")));
  EXPECT_EQ(run("render --out " + path("rp2")).code, 2);

  for (const char* dir : {"run", "ev"}) {
    const std::string again = std::string(dir) + "_again";
    ASSERT_EQ(run("replay " + path(std::string(dir) + "/run_manifest.json") + " --out " + path(again)).code, 0);
    for (const auto& entry : fs::directory_iterator(path(dir)))
      EXPECT_EQ(slurp(entry.path()), slurp(path(again) + "/" + entry.path().filename().string()))
          << entry.path();
  }
}

TEST_F(Cli, ReplayRejectsChangedInputs) {
  ASSERT_EQ(train_code_, 0);
  const std::string copy = path("copy.csv");
  fs::copy_file(std::string(CHEMREL_DATA) + "/huuskonen_solubility.csv", copy);
  ASSERT_EQ(run("evaluate " + path("run/model.ckpt") + " " + copy + " --out " + path("ev_copy")).code, 0);
  std::ofstream(copy, std::ios::app) << "C,0.0,methane\n";
  EXPECT_EQ(run("replay " + path("ev_copy/run_manifest.json") + " --out " + path("ev_copy2")).code, 1);
  EXPECT_FALSE(fs::exists(path("ev_copy2")));
}
