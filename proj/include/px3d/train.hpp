#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "px3d/dataset.hpp"
#include "px3d/metrics.hpp"
#include "px3d/network.hpp"
#include "px3d/progressive_loss.hpp"

namespace px3d::train {

/// Invalid configuration: unknown keys, bad values, or a dataset that does not
/// fit the network. Maps to exit code 2 in the command-line tool.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Training stopped on a non-finite loss.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, std::size_t step) : std::runtime_error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  std::string dataset;
  net::NetworkConfig network = net::NetworkConfig::desk();
  loss::ScheduleDirection schedule = loss::ScheduleDirection::toward_output;
  bool normalize_loss = true;
  AdamConfig adam;
  std::size_t batch_size = 2;
  std::size_t epochs = 20;
  std::size_t max_steps = 0;         // 0: no cap beyond epochs
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // steps; 0: only at epoch ends
  std::size_t eval_every = 1;        // epochs; 0: never validate

  void validate() const;
  loss::GuidanceSchedule guidance() const;

  nlohmann::json to_json() const;
  /// Strict: unknown or mistyped keys raise ConfigError.
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Every settable dotted key, e.g. "adam.lr" or "network.decoder_type".
std::vector<std::string> config_keys(const TrainConfig& config = {});

/// Applies "key=value"; the value is parsed as JSON when possible and as a
/// bare string otherwise. Unknown keys raise ConfigError naming every valid key.
void apply_override(TrainConfig& config, const std::string& assignment);

/// Defaults, then the JSON file (if any), then the overrides in order.
TrainConfig resolve_config(const std::optional<std::filesystem::path>& file,
                           const std::vector<std::string>& overrides);

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  void zero_grad();
  void step();
  std::size_t steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double total = 0.0;
  std::vector<loss::LevelLoss> levels;

  nlohmann::json to_json() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean step total over the epoch
  std::optional<double> val_mse;
  std::optional<double> val_psnr, val_ssim, val_dsc;

  nlohmann::json to_json() const;
};

struct RunRecord {
  nlohmann::json config;
  std::string source_digest;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  std::vector<std::string> dead_parameters;
  std::optional<std::size_t> aborted_at;
  double wall_seconds = 0.0;
};

/// Git revision the library was built from, or "unknown".
std::string source_digest();

struct TrainResult {
  net::Network network;
  RunRecord record;
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
};

using StepCallback = std::function<void(const StepRecord&)>;

/// Trains on in-memory samples. Writes run.jsonl, last.ckpt and (when any
/// validation sample exists) best.ckpt into `out_dir`. Throws TrainingAborted
/// after recording the step of a non-finite loss.
TrainResult train_on(const TrainConfig& config, const std::vector<data::SamplePair>& train_set,
                     const std::vector<data::SamplePair>& val_set, const std::filesystem::path& out_dir,
                     const StepCallback& on_step = {});

/// Loads the train and val splits of `config.dataset` and calls train_on.
TrainResult train(const TrainConfig& config, const std::filesystem::path& out_dir,
                  const StepCallback& on_step = {});

/// Stacks samples into a [B,1,H,W] input and a [B,D,H,W] target.
std::pair<Tensor, Tensor> make_batch(const std::vector<data::SamplePair>& samples,
                                     const std::vector<std::size_t>& indices);

/// Eval-mode final-level reconstruction of one px image [1,H,W] -> [D,H,W].
Tensor reconstruct(net::Network& network, const Tensor& px);

/// Scores the final-level reconstruction of every sample.
metrics::MetricReport evaluate(net::Network& network, const std::vector<data::SamplePair>& samples);

/// Throws ConfigError when the samples do not match the network's input and depth.
void check_compatible(const net::NetworkConfig& network, const std::vector<data::SamplePair>& samples);

std::vector<data::SamplePair> load_split(const std::filesystem::path& dataset, const std::string& split);

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

struct AblationCell {
  std::string name;
  net::DecoderType decoder;
  bool progressive;
  loss::ScheduleDirection schedule;
};

/// CNN and hybrid decoders, each without and with progressive guidance, plus
/// the hybrid progressive cell under both schedule directions (5 rows).
std::vector<AblationCell> ablation_grid();

struct AblationCellResult {
  AblationCell cell;
  bool failed = false;
  std::string error;
  metrics::MetricReport report;
  std::optional<StepRecord> last_step;
};

struct AblationResult {
  std::vector<AblationCellResult> cells;
  std::string table_text;
  std::string table_csv;
};

/// Trains and evaluates each cell on the dataset's train/test splits, writing
/// per-cell artifacts under out_dir/<cell>/ plus table.txt and table.csv.
AblationResult run_ablation(const TrainConfig& base, const std::filesystem::path& out_dir,
                            const std::function<void(const std::string&)>& log = {});

}  // namespace px3d::train
