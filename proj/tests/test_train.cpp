#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "px3d/binary_io.hpp"
#include "px3d/train.hpp"
#include "test_util.hpp"

using namespace px3d;
using namespace px3d::train;
using px3d::testing::TempDir;
namespace fs = std::filesystem;

namespace {

data::DatasetSpec small_spec(std::size_t subjects) {
  data::DatasetSpec s;
  s.subjects = subjects;
  s.seed = 21;
  s.phantom = {60, 60, 55, 2.0};
  return s;
}

const std::vector<data::SamplePair>& samples() {
  static const std::vector<data::SamplePair> cache = [] {
    const auto spec = small_spec(1);
    const auto ph = data::make_subject(spec, 0);
    std::vector<data::SamplePair> out;
    for (std::size_t c = 0; c < spec.classes.size(); ++c) out.push_back(data::make_sample(spec, ph, 0, c));
    return out;
  }();
  return cache;
}

TrainConfig quick_config(std::size_t steps) {
  TrainConfig c;
  c.batch_size = 2;
  c.max_steps = steps;
  c.epochs = 100;
  c.adam.lr = 1e-3;
  c.seed = 5;
  return c;
}

std::vector<nlohmann::json> read_jsonl(const fs::path& p) {
  std::ifstream in(p);
  std::vector<nlohmann::json> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(nlohmann::json::parse(line));
  return out;
}

}  // namespace

TEST(Config, OverridesUseDottedKeysAndJsonValues) {
  TrainConfig c;
  apply_override(c, "adam.lr=0.005");
  apply_override(c, "network.decoder_type=cnn");
  apply_override(c, "network.progressive=false");
  apply_override(c, "schedule=\"literal\"");
  apply_override(c, "dataset=/tmp/some data");
  EXPECT_EQ(c.adam.lr, 0.005);
  EXPECT_EQ(c.network.decoder_type, net::DecoderType::cnn);
  EXPECT_FALSE(c.network.progressive);
  EXPECT_EQ(c.schedule, loss::ScheduleDirection::literal);
  EXPECT_EQ(c.dataset, "/tmp/some data");
  EXPECT_EQ(c.guidance().alphas, loss::GuidanceSchedule::final_only().alphas);
}

TEST(Config, UnknownKeyListsEveryValidKey) {
  TrainConfig c;
  try {
    apply_override(c, "adam.learning_rate=1");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const auto& key : config_keys()) EXPECT_NE(msg.find(key), std::string::npos) << key;
  }
  EXPECT_THROW(apply_override(c, "no_equals_sign"), ConfigError);
  EXPECT_THROW(apply_override(c, "batch_size=\"four\""), ConfigError);
  EXPECT_THROW(apply_override(c, "network.decoder_type=mlp"), ConfigError);
  EXPECT_THROW(TrainConfig::from_json({{"adam", {{"momentum", 0.9}}}}), ConfigError);
  EXPECT_THROW(TrainConfig::from_json(nlohmann::json::array()), ConfigError);
}

TEST(Config, FileThenOverridesThenValidation) {
  TempDir dir("cfg");
  io::write_file_atomic(dir / "c.json", std::string(R"({"batch_size": 3, "adam": {"lr": 0.01}})"));
  const TrainConfig c = resolve_config(dir / "c.json", {"adam.lr=0.02"});
  EXPECT_EQ(c.batch_size, 3u);
  EXPECT_EQ(c.adam.lr, 0.02);
  EXPECT_EQ(c.adam.beta2, 0.999);
  EXPECT_EQ(TrainConfig::from_json(c.to_json()).to_json(), c.to_json());
  EXPECT_THROW(resolve_config(std::nullopt, {"adam.lr=-1"}), ConfigError);
  EXPECT_THROW(resolve_config(std::nullopt, {"batch_size=0"}), ConfigError);
  EXPECT_THROW(resolve_config(dir / "missing.json", {}), ConfigError);
  const auto keys = config_keys();
  EXPECT_NE(std::find(keys.begin(), keys.end(), "network.block_size"), keys.end());
}

TEST(Adam, MatchesHandComputedUpdates) {
  Tensor w = Tensor::from({2}, {1.0, -2.0}, true);
  const AdamConfig cfg{0.1, 0.9, 0.999, 1e-8};
  Adam opt({w}, cfg);
  const double g1[2] = {0.5, -3.0}, g2[2] = {-1.0, 2.0};
  double m[2] = {0, 0}, v[2] = {0, 0}, ref[2] = {1.0, -2.0};
  for (int t = 1; t <= 2; ++t) {
    const double* g = t == 1 ? g1 : g2;
    opt.zero_grad();
    reduce_sum(mul(w, Tensor::from({2}, {g[0], g[1]}))).backward();
    opt.step();
    for (int k = 0; k < 2; ++k) {
      m[k] = 0.9 * m[k] + 0.1 * g[k];
      v[k] = 0.999 * v[k] + 0.001 * g[k] * g[k];
      const double mh = m[k] / (1 - std::pow(0.9, t)), vh = v[k] / (1 - std::pow(0.999, t));
      ref[k] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
      EXPECT_NEAR(w.data()[k], ref[k], 1e-14);
    }
  }
  EXPECT_NEAR(ref[0], 1.0 - 0.1 * 0.5 / (0.5 + 1e-8) - 0.1 * (-0.055 / 0.19) / (std::sqrt(0.00124975 / 0.001999) + 1e-8),
              1e-12);
  EXPECT_EQ(opt.steps(), 2u);
}

TEST(Batches, StackAndCheckShapes) {
  const auto [x, y] = make_batch(samples(), {0, 3, 1});
  EXPECT_EQ(x.shape(), (Shape{3, 1, 32, 64}));
  EXPECT_EQ(y.shape(), (Shape{3, 16, 32, 64}));
  EXPECT_EQ(x.at({1, 0, 5, 7}), samples()[3].px.at({0, 5, 7}));
  EXPECT_THROW(make_batch(samples(), {}), std::invalid_argument);
  net::NetworkConfig other = net::NetworkConfig::desk();
  other.depth = 8;
  EXPECT_THROW(check_compatible(other, samples()), ConfigError);
  EXPECT_NO_THROW(check_compatible(net::NetworkConfig::desk(), samples()));
}

TEST(Score, GroundTruthAgainstItself) {
  const auto s = metrics::score("gt", samples()[0].flattened, samples()[0].flattened);
  EXPECT_FALSE(s.psnr_db.has_value());
  EXPECT_EQ(s.ssim, 1.0);
  EXPECT_EQ(s.dsc, 1.0);
}

TEST(Training, SameSeedGivesIdenticalRuns) {
  TempDir dir("train");
  const TrainConfig cfg = quick_config(4);
  const std::vector<data::SamplePair> train_set(samples().begin(), samples().begin() + 4);
  const std::vector<data::SamplePair> val_set(samples().begin() + 4, samples().end());
  const TrainResult a = train_on(cfg, train_set, val_set, dir / "a");
  const TrainResult b = train_on(cfg, train_set, val_set, dir / "b");
  ASSERT_EQ(a.record.steps.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(a.record.steps[i].total, b.record.steps[i].total);
  EXPECT_EQ(io::read_file(a.last_checkpoint), io::read_file(b.last_checkpoint));
  EXPECT_EQ(io::read_file(a.best_checkpoint), io::read_file(b.best_checkpoint));
  EXPECT_EQ(a.record.epochs.size(), 2u);
  EXPECT_TRUE(a.record.epochs.back().val_mse.has_value());

  TrainConfig other = cfg;
  other.seed = 6;
  const TrainResult c = train_on(other, train_set, val_set, dir / "c");
  EXPECT_NE(c.record.steps[0].total, a.record.steps[0].total);
}

TEST(Training, LevelLossesRecombineToTheTotal) {
  TempDir dir("train");
  TrainConfig cfg = quick_config(3);
  cfg.schedule = loss::ScheduleDirection::literal;
  const TrainResult r = train_on(cfg, samples(), {}, dir.path());
  for (const auto& s : r.record.steps) {
    ASSERT_EQ(s.levels.size(), 5u);
    double sum = 0.0;
    for (const auto& l : s.levels) sum += l.alpha * l.value;
    EXPECT_NEAR(sum, s.total, 1e-6 * std::abs(s.total));
  }
}

TEST(Training, EveryParameterReceivesGradient) {
  TempDir dir("train");
  for (auto decoder : {net::DecoderType::hybrid, net::DecoderType::cnn}) {
    TrainConfig cfg = quick_config(10);
    cfg.network.decoder_type = decoder;
    const TrainResult r = train_on(cfg, samples(), {}, dir / net::to_string(decoder));
    EXPECT_TRUE(r.record.dead_parameters.empty()) << r.record.dead_parameters.front();
  }
}

TEST(Training, WithoutValidationThereIsNoBestCheckpoint) {
  TempDir dir("train");
  const TrainResult r = train_on(quick_config(2), samples(), {}, dir.path());
  EXPECT_TRUE(r.best_checkpoint.empty());
  EXPECT_FALSE(fs::exists(dir / "best.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "last.ckpt"));
  const auto events = read_jsonl(dir / "run.jsonl");
  ASSERT_GE(events.size(), 4u);
  EXPECT_EQ(events.front()["event"], "start");
  EXPECT_EQ(events.front()["source_digest"], source_digest());
  EXPECT_EQ(events.back()["event"], "end");
  EXPECT_EQ(std::count_if(events.begin(), events.end(), [](const auto& e) { return e["event"] == "step"; }), 2);
  EXPECT_EQ(std::count_if(events.begin(), events.end(), [](const auto& e) { return e["event"] == "gradient_flow"; }),
            1);
}

TEST(Training, CheckpointReloadsToIdenticalScores) {
  TempDir dir("train");
  TrainResult r = train_on(quick_config(3), samples(), {}, dir.path());
  net::Network loaded = net::load_checkpoint(r.last_checkpoint, r.network.config());
  const auto a = evaluate(r.network, samples());
  const auto b = evaluate(loaded, samples());
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].psnr_db, b.rows[i].psnr_db);
    EXPECT_EQ(a.rows[i].ssim, b.rows[i].ssim);
    EXPECT_EQ(a.rows[i].dsc, b.rows[i].dsc);
  }
  EXPECT_EQ(reconstruct(loaded, samples()[0].px).shape(), (Shape{16, 32, 64}));
  EXPECT_THROW(reconstruct(loaded, samples()[0].flattened), ShapeError);
}

TEST(Training, NonFiniteLossAbortsAndRecordsTheStep) {
  TempDir dir("train");
  TrainConfig cfg = quick_config(20);
  cfg.adam.lr = 1e200;
  try {
    train_on(cfg, samples(), {}, dir.path());
    FAIL() << "expected TrainingAborted";
  } catch (const TrainingAborted& e) {
    EXPECT_GE(e.step(), 2u);
    const auto events = read_jsonl(dir / "run.jsonl");
    EXPECT_EQ(events.back()["event"], "abort");
    EXPECT_EQ(events.back()["step"], e.step());
  }
}

TEST(Training, EmptyOrMismatchedInputsAreConfigErrors) {
  TempDir dir("train");
  EXPECT_THROW(train_on(quick_config(1), {}, {}, dir.path()), ConfigError);
  TrainConfig cfg = quick_config(1);
  cfg.network.depth = 32;
  EXPECT_THROW(train_on(cfg, samples(), {}, dir.path()), ConfigError);
  EXPECT_THROW(px3d::train::train(quick_config(1), dir.path()), ConfigError);
}

TEST(Ablation, GridCoversBothDecodersAndSchedules) {
  const auto grid = ablation_grid();
  ASSERT_EQ(grid.size(), 5u);
  EXPECT_EQ(grid[0].name, "cnn");
  EXPECT_EQ(grid[3].name, "hybrid_progressive");
  EXPECT_EQ(grid[4].schedule, loss::ScheduleDirection::literal);
}

TEST(Ablation, RunsEveryCellAndWritesTables) {
  TempDir dir("ablate");
  data::DatasetSpec spec = small_spec(3);
  spec.split_fractions = {0.4, 0.3, 0.3};
  data::build_dataset(spec, dir / "data");
  TrainConfig cfg = quick_config(2);
  cfg.dataset = (dir / "data").string();
  const AblationResult r = run_ablation(cfg, dir / "out");
  ASSERT_EQ(r.cells.size(), 5u);
  for (const auto& c : r.cells) {
    EXPECT_FALSE(c.failed) << c.cell.name << ": " << c.error;
    EXPECT_EQ(c.report.rows.size(), 10u);
    ASSERT_TRUE(c.last_step.has_value());
    EXPECT_TRUE(fs::exists(dir / "out" / c.cell.name / "metrics.csv"));
  }
  EXPECT_EQ(r.cells[0].last_step->levels.size(), 1u);
  EXPECT_EQ(r.cells[3].last_step->levels.size(), 5u);
  EXPECT_EQ(io::read_file(dir / "out" / "table.csv").size(), r.table_csv.size());
  EXPECT_NE(r.table_text.find("hybrid_progressive_literal"), std::string::npos);
}
