#include "expander/corpus.hpp"
#include "expander/synthetic.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

using namespace expander;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int status = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("expander-cli-" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliRun invoke(const std::string& args) const {
    const auto out = dir_ / "stdout", err = dir_ / "stderr";
    const std::string cmd = std::string(EXPANDER_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out), slurp(err)};
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, PrintsOrderBound) {
  const auto r = invoke("theory --bound 4");
  EXPECT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(r.out, "22\n");
}

TEST_F(Cli, SeededProjectionIsReproducible) {
  const auto corpus = dir_ / "corpus.jsonl";
  save_corpus(corpus, make_random_corpus(5, 30, 5, 8));
  const auto a = dir_ / "a.json", b = dir_ / "b.json";
  for (const auto& out : {a, b}) {
    const auto r = invoke("--seed 7 project --corpus " + corpus.string() + " --out " + out.string() + " --epochs 5");
    ASSERT_EQ(r.status, 0) << r.err;
  }
  EXPECT_FALSE(slurp(a).empty());
  EXPECT_EQ(slurp(a), slurp(b));
}

TEST_F(Cli, BadCorpusFailsWithStage) {
  const auto corpus = dir_ / "bad.jsonl";
  std::ofstream(corpus) << "{\"type\": \"image\", \"id\":\n";
  const auto r = invoke("ingest --corpus " + corpus.string());
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.err.find("error [ingest]"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("line 1"), std::string::npos) << r.err;
}

TEST_F(Cli, UnknownSubcommandFails) {
  EXPECT_NE(invoke("nonsense").status, 0);
}
