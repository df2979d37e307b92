#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "px3d/binary_io.hpp"
#include "px3d/dataset.hpp"
#include "px3d/image.hpp"
#include "px3d/network.hpp"
#include "px3d/pxt_io.hpp"
#include "px3d/train.hpp"

namespace fs = std::filesystem;
using namespace px3d;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

/// Empties `dir` when --force is given; refuses to reuse a non-empty directory otherwise.
void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw train::ConfigError("output " + dir.string() + " already exists (use --force to replace it)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

void echo_config(const fs::path& dir, const train::TrainConfig& config) {
  io::write_file_atomic(dir / "config.json", config.to_json().dump(2) + "\n");
}

std::optional<fs::path> optional_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

struct SynthArgs {
  std::string out;
  std::size_t subjects = 10;
  std::uint64_t seed = 0;
  std::size_t depth = 16, height = 32, width = 64;
  std::vector<double> splits{0.7, 0.15, 0.15};
  bool force = false;
};

int cmd_synth(const SynthArgs& a) {
  data::DatasetSpec spec;
  spec.subjects = a.subjects;
  spec.seed = a.seed;
  spec.reformat.out_depth = a.depth;
  spec.reformat.out_height = a.height;
  spec.reformat.out_width = a.width;
  if (a.splits.size() != 3) throw train::ConfigError("--splits takes three fractions");
  spec.split_fractions = {a.splits[0], a.splits[1], a.splits[2]};
  spec.validate();
  if (fs::exists(a.out) && !a.force) {
    throw train::ConfigError("output " + a.out + " already exists (use --force to replace it)");
  }
  const auto manifest = data::build_dataset(spec, a.out, a.force);
  std::printf("dataset %s: %zu subjects, %zu samples (seed %llu)\n", a.out.c_str(), spec.subjects,
              manifest.samples.size(), static_cast<unsigned long long>(spec.seed));
  for (std::size_t i = 0; i < 3; ++i) {
    std::printf("  %-5s %zu subjects, %zu samples\n", data::kSplitNames[i], manifest.split_subjects[i].size(),
                manifest.split(data::kSplitNames[i]).size());
  }
  return kExitOk;
}

struct RunArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string data;
  std::string out;
  bool force = false;
};

train::TrainConfig resolve(const RunArgs& a) {
  auto overrides = a.overrides;
  if (!a.data.empty()) overrides.push_back("dataset=\"" + a.data + "\"");
  return train::resolve_config(optional_path(a.config), overrides);
}

int cmd_train(const RunArgs& a) {
  const auto config = resolve(a);
  prepare_output_dir(a.out, a.force);
  echo_config(a.out, config);
  std::printf("training %s decoder, progressive %s, %zu parameters\n",
              net::to_string(config.network.decoder_type).c_str(), config.network.progressive ? "on" : "off",
              net::parameter_count(config.network));
  const auto result = train::train(config, a.out, [](const train::StepRecord& r) {
    if (r.step == 1 || r.step % 50 == 0) std::printf("step %zu epoch %zu loss %.6g\n", r.step, r.epoch, r.total);
  });
  for (const auto& e : result.record.epochs) {
    if (e.val_mse) std::printf("epoch %zu train %.6g val_mse %.6g\n", e.epoch, e.train_loss, *e.val_mse);
  }
  if (!result.record.dead_parameters.empty()) {
    std::printf("warning: %zu parameter tensors received no gradient in the first steps\n",
                result.record.dead_parameters.size());
  }
  std::printf("wrote %s\n", result.last_checkpoint.c_str());
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string config;
  std::vector<std::string> overrides;
  std::string data;
  std::string split = "test";
  std::string out;
  bool force = false;
};

int cmd_eval(const EvalArgs& a) {
  std::optional<net::NetworkConfig> expected;
  if (!a.config.empty() || !a.overrides.empty()) {
    expected = train::resolve_config(optional_path(a.config), a.overrides).network;
  }
  net::Network network = net::load_checkpoint(a.checkpoint, expected);
  if (a.data.empty()) throw train::ConfigError("--data is required");
  const auto samples = train::load_split(a.data, a.split);
  train::check_compatible(network.config(), samples);
  prepare_output_dir(a.out, a.force);

  auto report = train::evaluate(network, samples);
  report.method = fs::path(a.checkpoint).filename().string();
  io::write_file_atomic(fs::path(a.out) / "metrics.csv", report.to_csv());
  nlohmann::json summary = {
      {"checkpoint", a.checkpoint},
      {"split", a.split},
      {"samples", report.rows.size()},
      {"identical", report.identical},
      {"psnr_db", {{"mean", report.psnr.mean}, {"std", report.psnr.stddev}, {"count", report.psnr.count}}},
      {"ssim", {{"mean", report.ssim.mean}, {"std", report.ssim.stddev}}},
      {"dsc", {{"mean", report.dsc.mean}, {"std", report.dsc.stddev}}},
      {"network", network.config().to_json()}};
  io::write_file_atomic(fs::path(a.out) / "summary.json", summary.dump(2) + "\n");
  std::printf("%s\n", report.summary().c_str());
  return kExitOk;
}

struct ReconstructArgs {
  std::string px;
  std::string checkpoint;
  std::string out;
  std::string montage;
};

int cmd_reconstruct(const ReconstructArgs& a) {
  net::Network network = net::load_checkpoint(a.checkpoint);
  const auto entries = io::read_pxt(a.px);
  const Tensor& px = io::find_tensor(entries, "px");
  const auto& cfg = network.config();
  if (px.shape() != Shape{1, cfg.input_h, cfg.input_w}) {
    throw train::ConfigError("px image " + to_string(px.shape()) + " does not match the checkpoint input [1, " +
                             std::to_string(cfg.input_h) + ", " + std::to_string(cfg.input_w) + "]");
  }
  const Tensor volume = train::reconstruct(network, px);
  io::write_pxt(a.out, {{"flattened", volume}});
  const auto [lo, hi] = std::minmax_element(volume.data().begin(), volume.data().end());
  std::printf("reconstructed %s, value range [%.6g, %.6g]\n", to_string(volume.shape()).c_str(), *lo, *hi);
  if (!a.montage.empty()) {
    image::write_png(a.montage, image::depth_montage(volume));
    std::printf("montage %s\n", a.montage.c_str());
  }
  return kExitOk;
}

int cmd_ablate(const RunArgs& a) {
  const auto config = resolve(a);
  prepare_output_dir(a.out, a.force);
  echo_config(a.out, config);
  const auto result = train::run_ablation(config, a.out, [](const std::string& line) {
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
  });
  std::printf("\n%s", result.table_text.c_str());
  for (const auto& c : result.cells)
    if (c.failed) return kExitRuntime;
  return kExitOk;
}

void add_run_options(CLI::App* cmd, RunArgs& a) {
  cmd->add_option("--config", a.config, "JSON training config file");
  cmd->add_option("--set", a.overrides, "Config override key=value (repeatable, applied after --config)")
      ->default_str("");
  cmd->add_option("--data", a.data, "Dataset directory (same as --set dataset=...)");
  cmd->add_option("--out", a.out, "Output directory")->required();
  cmd->add_flag("--force", a.force, "Replace an existing output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pxrecon: flattened 3D reconstruction from panoramic X-ray images", "pxrecon"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic phantom dataset");
  synth_cmd->add_option("--out", synth.out, "Output dataset directory")->required();
  synth_cmd->add_option("--subjects", synth.subjects, "Number of phantom subjects");
  synth_cmd->add_option("--seed", synth.seed, "Dataset seed");
  synth_cmd->add_option("--depth", synth.depth, "Reconstruction depth D");
  synth_cmd->add_option("--height", synth.height, "Image height H");
  synth_cmd->add_option("--width", synth.width, "Image width W");
  synth_cmd->add_option("--splits", synth.splits, "Train, val and test subject fractions")
      ->delimiter(',')
      ->expected(3)
      ->default_str("0.7,0.15,0.15");
  synth_cmd->add_flag("--force", synth.force, "Replace an existing output directory");

  RunArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a reconstruction network");
  add_run_options(train_cmd, train_args);

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a dataset split");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval.data, "Dataset directory")->required();
  eval_cmd->add_option("--split", eval.split, "Split to evaluate (train, val or test)");
  eval_cmd->add_option("--config", eval.config, "Expected JSON config; the checkpoint must match it");
  eval_cmd->add_option("--set", eval.overrides, "Override of the expected config, key=value (repeatable)")
      ->default_str("");
  eval_cmd->add_option("--out", eval.out, "Output directory")->required();
  eval_cmd->add_flag("--force", eval.force, "Replace an existing output directory");

  ReconstructArgs rec;
  auto* rec_cmd = app.add_subcommand("reconstruct", "Reconstruct the flattened volume of one PX image");
  rec_cmd->add_option("--px", rec.px, "PXT1 file holding a 'px' tensor [1,H,W]")->required();
  rec_cmd->add_option("--checkpoint", rec.checkpoint, "Checkpoint file")->required();
  rec_cmd->add_option("--out", rec.out, "Output PXT1 file for the [D,H,W] volume")->required();
  rec_cmd->add_option("--montage", rec.montage, "Optional PNG montage of 8 depth slices");

  RunArgs ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and score the decoder/guidance comparison grid");
  add_run_options(ablate_cmd, ablate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*synth_cmd) return cmd_synth(synth);
    if (*train_cmd) return cmd_train(train_args);
    if (*eval_cmd) return cmd_eval(eval);
    if (*rec_cmd) return cmd_reconstruct(rec);
    if (*ablate_cmd) return cmd_ablate(ablate);
  } catch (const train::TrainingAborted& e) {
    std::cerr << "error: training aborted at step " << e.step() << ": " << e.what() << '\n';
    return kExitRuntime;
  } catch (const net::DigestMismatch& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
