#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "px3d/random.hpp"
#include "px3d/train.hpp"

#ifndef PX3D_SOURCE_DIGEST
#define PX3D_SOURCE_DIGEST "unknown"
#endif

namespace px3d::train {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kDeadGraphWindow = 10;
constexpr std::uint64_t kNetworkStream = 1;
constexpr std::uint64_t kShuffleStream = 1000;

class JsonLines {
 public:
  explicit JsonLines(const fs::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
  }
  void write(const json& j) {
    out_ << j.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

double final_mse(net::Network& network, const std::vector<data::SamplePair>& samples) {
  double total = 0.0;
  for (const auto& s : samples) {
    const Tensor pred = reconstruct(network, s.px);
    const auto& p = pred.data();
    const auto& g = s.flattened.data();
    double sse = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) sse += (p[i] - g[i]) * (p[i] - g[i]);
    total += sse / static_cast<double>(p.size());
  }
  return total / static_cast<double>(samples.size());
}

}  // namespace

std::string source_digest() { return PX3D_SOURCE_DIGEST; }

Adam::Adam(std::vector<Tensor> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) continue;
    const auto g = params_[i].grad();
    auto w = params_[i].mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g[k];
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      w[k] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

json StepRecord::to_json() const {
  json levels_json = json::array();
  for (const auto& l : levels) levels_json.push_back({{"level", l.index}, {"alpha", l.alpha}, {"loss", l.value}});
  return {{"event", "step"}, {"step", step}, {"epoch", epoch}, {"total", total}, {"levels", levels_json}};
}

json EpochRecord::to_json() const {
  json j = {{"event", "epoch"}, {"epoch", epoch}, {"train_loss", train_loss}};
  if (val_mse) j["val_mse"] = *val_mse;
  if (val_psnr) j["val_psnr"] = *val_psnr;
  if (val_ssim) j["val_ssim"] = *val_ssim;
  if (val_dsc) j["val_dsc"] = *val_dsc;
  return j;
}

std::pair<Tensor, Tensor> make_batch(const std::vector<data::SamplePair>& samples,
                                     const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw std::invalid_argument("make_batch: empty batch");
  const Shape& px = samples.at(indices[0]).px.shape();
  const Shape& gt = samples.at(indices[0]).flattened.shape();
  std::vector<double> x, y;
  x.reserve(indices.size() * numel_of(px));
  y.reserve(indices.size() * numel_of(gt));
  for (std::size_t i : indices) {
    const auto& s = samples.at(i);
    x.insert(x.end(), s.px.data().begin(), s.px.data().end());
    y.insert(y.end(), s.flattened.data().begin(), s.flattened.data().end());
  }
  return {Tensor::from({indices.size(), 1, px[1], px[2]}, std::move(x)),
          Tensor::from({indices.size(), gt[0], gt[1], gt[2]}, std::move(y))};
}

Tensor reconstruct(net::Network& network, const Tensor& px) {
  if (px.rank() != 3 || px.dim(0) != 1) {
    throw ShapeError("reconstruct: expected a [1,H,W] image, got " + to_string(px.shape()));
  }
  const Tensor input = reshape(px.detach(), {1, 1, px.dim(1), px.dim(2)});
  const Tensor out = network.forward(input, Mode::eval).final().detach();
  return reshape(out, {out.dim(1), out.dim(2), out.dim(3)});
}

metrics::MetricReport evaluate(net::Network& network, const std::vector<data::SamplePair>& samples) {
  metrics::MetricReport report;
  report.decoder_type = net::to_string(network.config().decoder_type);
  report.progressive = network.config().progressive;
  for (const auto& s : samples) report.rows.push_back(metrics::score(s.sample_id, reconstruct(network, s.px), s.flattened));
  report.finalize();
  return report;
}

void check_compatible(const net::NetworkConfig& network, const std::vector<data::SamplePair>& samples) {
  for (const auto& s : samples) {
    const Shape want_px{1, network.input_h, network.input_w};
    const Shape want_gt{network.depth, network.input_h, network.input_w};
    if (s.px.shape() != want_px || s.flattened.shape() != want_gt) {
      throw ConfigError("sample " + s.sample_id + " has px " + to_string(s.px.shape()) + " and flattened " +
                        to_string(s.flattened.shape()) + ", network expects " + to_string(want_px) + " and " +
                        to_string(want_gt));
    }
  }
}

std::vector<data::SamplePair> load_split(const fs::path& dataset, const std::string& split) {
  const data::Manifest manifest = data::load_manifest(dataset);
  std::vector<data::SamplePair> out;
  for (const auto& meta : manifest.split(split)) out.push_back(data::load_sample(dataset, meta));
  return out;
}

TrainResult train_on(const TrainConfig& config, const std::vector<data::SamplePair>& train_set,
                     const std::vector<data::SamplePair>& val_set, const fs::path& out_dir,
                     const StepCallback& on_step) {
  config.validate();
  if (train_set.empty()) throw ConfigError("training split is empty");
  check_compatible(config.network, train_set);
  check_compatible(config.network, val_set);
  const auto schedule = config.guidance();

  fs::create_directories(out_dir);
  const auto started = std::chrono::steady_clock::now();
  TrainResult result{net::Network::create(config.network, derive_seed(config.seed, kNetworkStream)), {}, {}, {}};
  net::Network& network = result.network;
  RunRecord& record = result.record;
  record.config = config.to_json();
  record.source_digest = source_digest();
  result.last_checkpoint = out_dir / "last.ckpt";
  result.best_checkpoint = out_dir / "best.ckpt";

  JsonLines log(out_dir / "run.jsonl");
  log.write({{"event", "start"}, {"config", record.config}, {"source_digest", record.source_digest},
             {"parameters", net::parameter_count(config.network)}, {"train_samples", train_set.size()},
             {"val_samples", val_set.size()}});

  const auto named = network.named_parameters();
  std::vector<Tensor> params;
  for (const auto& [name, t] : named) params.push_back(t);
  Adam adam(params, config.adam);
  std::vector<bool> alive(params.size(), false);
  bool dead_checked = false;
  auto check_dead = [&] {
    dead_checked = true;
    for (std::size_t i = 0; i < params.size(); ++i)
      if (!alive[i]) record.dead_parameters.push_back(named[i].first);
    log.write({{"event", "gradient_flow"}, {"steps_observed", std::min(adam.steps(), kDeadGraphWindow)},
               {"dead_parameters", record.dead_parameters}});
  };

  std::optional<double> best_val;
  std::size_t step = 0;
  const std::size_t epochs = config.epochs == 0 ? std::numeric_limits<std::size_t>::max() : config.epochs;
  bool done = false;
  for (std::size_t epoch = 1; epoch <= epochs && !done; ++epoch) {
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(config.seed, kShuffleStream + epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    }

    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::vector<std::size_t> batch(order.begin() + start,
                                           order.begin() + std::min(start + config.batch_size, order.size()));
      ++step;
      StepRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      try {
        const auto [x, y] = make_batch(train_set, batch);
        const auto pyramid = network.forward(x, Mode::train);
        const auto labels = loss::scale_labels_for(y, pyramid);
        const auto breakdown = loss::progressive_loss(pyramid, labels, schedule, config.normalize_loss);
        rec.total = breakdown.total.item();
        rec.levels = breakdown.levels;
        adam.zero_grad();
        breakdown.total.backward();
      } catch (const NumericError& e) {
        record.aborted_at = step;
        log.write({{"event", "abort"}, {"step", step}, {"reason", e.what()}});
        throw TrainingAborted("non-finite value at step " + std::to_string(step) + ": " + e.what(), step);
      }
      for (std::size_t i = 0; i < params.size() && adam.steps() < kDeadGraphWindow; ++i) {
        if (alive[i] || !params[i].has_grad()) continue;
        for (double g : params[i].grad())
          if (g != 0.0) {
            alive[i] = true;
            break;
          }
      }
      adam.step();
      if (!dead_checked && adam.steps() == kDeadGraphWindow) check_dead();

      record.steps.push_back(rec);
      log.write(rec.to_json());
      if (on_step) on_step(rec);
      epoch_loss += rec.total;
      ++epoch_steps;
      if (config.checkpoint_every && step % config.checkpoint_every == 0) {
        net::save_checkpoint(network, result.last_checkpoint);
      }
      if (config.max_steps && step >= config.max_steps) {
        done = true;
        break;
      }
    }

    EpochRecord er;
    er.epoch = epoch;
    er.train_loss = epoch_loss / static_cast<double>(std::max<std::size_t>(epoch_steps, 1));
    const bool validate_now = !val_set.empty() && config.eval_every && (epoch % config.eval_every == 0 || done ||
                                                                        epoch == epochs);
    if (validate_now) {
      er.val_mse = final_mse(network, val_set);
      const auto report = evaluate(network, val_set);
      er.val_psnr = report.psnr.mean;
      er.val_ssim = report.ssim.mean;
      er.val_dsc = report.dsc.mean;
      if (!best_val || *er.val_mse < *best_val) {
        best_val = er.val_mse;
        net::save_checkpoint(network, result.best_checkpoint);
      }
    }
    net::save_checkpoint(network, result.last_checkpoint);
    record.epochs.push_back(er);
    log.write(er.to_json());
  }
  if (!dead_checked) check_dead();
  if (!best_val) result.best_checkpoint.clear();

  record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  log.write({{"event", "end"}, {"steps", step}, {"wall_seconds", record.wall_seconds}});
  return result;
}

TrainResult train(const TrainConfig& config, const fs::path& out_dir, const StepCallback& on_step) {
  if (config.dataset.empty()) throw ConfigError("dataset path is not set (use --data or --set dataset=...)");
  const fs::path root(config.dataset);
  if (!fs::exists(root / "manifest.json")) throw ConfigError("no dataset manifest in " + root.string());
  return train_on(config, load_split(root, "train"), load_split(root, "val"), out_dir, on_step);
}

}  // namespace px3d::train
