#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "json.hpp"
#include "px3d/binary_io.hpp"
#include "px3d/pxt_io.hpp"
#include "test_util.hpp"

using px3d::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string output;
};

Outcome pxrecon(const std::string& args) {
  const std::string cmd = std::string(PXRECON_PATH) + " " + args + " 2>&1";
  Outcome r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed");
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) r.output.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

std::uint32_t be32(const std::string& s, std::size_t at) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(s[at + i]);
  return v;
}

/// One small dataset and a one-step checkpoint shared by the tests below.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    const Outcome synth = pxrecon("synth --out " + data().string() + " --subjects 2 --seed 3 --splits 0.5,0.5,0");
    ASSERT_EQ(synth.code, 0) << synth.output;
    const Outcome train = pxrecon("train --data " + data().string() + " --out " + run().string() +
                              " --set max_steps=1 --set batch_size=5 --set seed=2");
    ASSERT_EQ(train.code, 0) << train.output;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static fs::path data() { return dir_->path() / "data"; }
  static fs::path run() { return dir_->path() / "run"; }
  static fs::path scratch(const std::string& name) { return dir_->path() / name; }

 private:
  static TempDir* dir_;
};

TempDir* Cli::dir_ = nullptr;

}  // namespace

TEST(CliHelp, MatchesGoldenText) {
  for (const std::string sub : {"synth", "train", "eval", "reconstruct", "ablate"}) {
    const Outcome r = pxrecon(sub + " --help");
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(r.output, slurp(fs::path(GOLDEN_DIR) / (sub + ".txt"))) << sub;
  }
}

TEST(CliHelp, UsageErrorsExitWithTwo) {
  EXPECT_EQ(pxrecon("").code, 2);
  EXPECT_EQ(pxrecon("frobnicate").code, 2);
  EXPECT_EQ(pxrecon("synth").code, 2);
  EXPECT_EQ(pxrecon("synth --out /tmp/x --splits 0.5,0.5").code, 2);
}

TEST(CliSynth, ZeroSubjectsIsAConfigError) {
  TempDir dir("cli");
  const Outcome r = pxrecon("synth --out " + (dir / "d").string() + " --subjects 0");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("subjects"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(dir / "d"));
}

TEST(CliSynth, DefaultSplitOfTenSubjects) {
  TempDir dir("cli");
  const Outcome r = pxrecon("synth --out " + (dir / "d").string() + " --subjects 10 --seed 42");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("seed 42"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("train 7 subjects, 35 samples"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("val   1 subjects, 5 samples"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("test  2 subjects, 10 samples"), std::string::npos) << r.output;
  const auto manifest = nlohmann::json::parse(slurp(dir / "d" / "manifest.json"));
  EXPECT_EQ(manifest["seed"], 42);
  EXPECT_EQ(manifest["samples"].size(), 50u);
}

TEST(CliSynth, ForceRebuildIsByteIdentical) {
  TempDir dir("cli");
  const std::string args = "synth --out " + (dir / "d").string() + " --subjects 1 --seed 8";
  ASSERT_EQ(pxrecon(args).code, 0);
  const auto first = tree(dir / "d");
  EXPECT_EQ(pxrecon(args).code, 2);
  ASSERT_EQ(pxrecon(args + " --force").code, 0);
  EXPECT_EQ(first, tree(dir / "d"));
}

TEST_F(Cli, TrainWritesRunArtifacts) {
  for (const char* f : {"config.json", "run.jsonl", "last.ckpt", "best.ckpt"}) {
    EXPECT_TRUE(fs::exists(run() / f)) << f;
  }
  const auto cfg = nlohmann::json::parse(slurp(run() / "config.json"));
  EXPECT_EQ(cfg["max_steps"], 1);
  EXPECT_EQ(cfg["dataset"], data().string());
  const Outcome again = pxrecon("train --data " + data().string() + " --out " + run().string());
  EXPECT_EQ(again.code, 2);
  EXPECT_NE(again.output.find("--force"), std::string::npos);
  const Outcome bad = pxrecon("train --data " + data().string() + " --out " + scratch("bad").string() +
                          " --set adam.momentum=0.5");
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.output.find("adam.beta1"), std::string::npos) << bad.output;
}

TEST_F(Cli, TrainAbortExitsWithOne) {
  const Outcome r = pxrecon("train --data " + data().string() + " --out " + scratch("nan").string() +
                        " --set adam.lr=1e200 --set max_steps=20");
  EXPECT_EQ(r.code, 1) << r.output;
  EXPECT_NE(r.output.find("aborted at step"), std::string::npos) << r.output;
}

TEST_F(Cli, EvalWritesMetricsAndRejectsMismatchedConfig) {
  const std::string ckpt = (run() / "last.ckpt").string();
  const Outcome ok = pxrecon("eval --checkpoint " + ckpt + " --data " + data().string() + " --split val --out " +
                         scratch("eval").string());
  ASSERT_EQ(ok.code, 0) << ok.output;
  const std::string csv = slurp(scratch("eval") / "metrics.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
  const auto summary = nlohmann::json::parse(slurp(scratch("eval") / "summary.json"));
  EXPECT_EQ(summary["samples"], 5);

  const Outcome bad = pxrecon("eval --checkpoint " + ckpt + " --data " + data().string() +
                          " --split val --set network.decoder_type=cnn --out " + scratch("eval2").string());
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.output.find("decoder_type"), std::string::npos) << bad.output;
}

TEST_F(Cli, ReconstructWritesVolumeAndMontage) {
  const fs::path sample = *std::find_if(fs::directory_iterator(data() / "samples"), fs::directory_iterator{},
                                        [](const auto& e) { return e.path().extension() == ".pxt"; });
  const Outcome r = pxrecon("reconstruct --px " + sample.string() + " --checkpoint " + (run() / "last.ckpt").string() +
                        " --out " + scratch("vol.pxt").string() + " --montage " + scratch("m.png").string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto vol = px3d::io::read_pxt(scratch("vol.pxt"));
  EXPECT_EQ(px3d::io::find_tensor(vol, "flattened").shape(), (px3d::Shape{16, 32, 64}));
  const std::string png = slurp(scratch("m.png"));
  ASSERT_GT(png.size(), 24u);
  EXPECT_EQ(png.substr(1, 3), "PNG");
  EXPECT_EQ(be32(png, 16), 4u * 64);
  EXPECT_EQ(be32(png, 20), 2u * 32);

  px3d::Rng rng(1);
  px3d::io::write_pxt(scratch("small.pxt"), {{"px", px3d::testing::random_tensor({1, 16, 32}, rng, 0, 1)}});
  const Outcome bad = pxrecon("reconstruct --px " + scratch("small.pxt").string() + " --checkpoint " +
                          (run() / "last.ckpt").string() + " --out " + scratch("bad.pxt").string());
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.output.find("[1, 32, 64]"), std::string::npos) << bad.output;
  EXPECT_FALSE(fs::exists(scratch("bad.pxt")));
}

TEST_F(Cli, AblateTablesAgree) {
  const Outcome r = pxrecon("ablate --data " + data().string() + " --out " + scratch("ablate").string() +
                        " --set max_steps=1 --set batch_size=5");
  ASSERT_EQ(r.code, 0) << r.output;
  const std::string text = slurp(scratch("ablate") / "table.txt");
  std::istringstream csv(slurp(scratch("ablate") / "table.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "method,psnr_db,dsc_x100,ssim_x100");
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    std::istringstream fields(line);
    std::string name, cell;
    std::getline(fields, name, ',');
    const auto at = text.find(name + " ");
    ASSERT_NE(at, std::string::npos) << name;
    const std::string row = text.substr(at, text.find('\n', at) - at);
    while (std::getline(fields, cell, ',')) EXPECT_NE(row.find(cell), std::string::npos) << name << " " << cell;
    ++rows;
  }
  EXPECT_EQ(rows, 5u);
  EXPECT_NE(r.output.find(text), std::string::npos);
}
