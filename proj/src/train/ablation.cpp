#include <fstream>

#include "px3d/binary_io.hpp"
#include "px3d/report.hpp"
#include "px3d/train.hpp"

namespace px3d::train {

namespace fs = std::filesystem;

std::vector<AblationCell> ablation_grid() {
  using loss::ScheduleDirection;
  using net::DecoderType;
  return {
      {"cnn", DecoderType::cnn, false, ScheduleDirection::toward_output},
      {"cnn_progressive", DecoderType::cnn, true, ScheduleDirection::toward_output},
      {"hybrid", DecoderType::hybrid, false, ScheduleDirection::toward_output},
      {"hybrid_progressive", DecoderType::hybrid, true, ScheduleDirection::toward_output},
      {"hybrid_progressive_literal", DecoderType::hybrid, true, ScheduleDirection::literal},
  };
}

AblationResult run_ablation(const TrainConfig& base, const fs::path& out_dir,
                            const std::function<void(const std::string&)>& log) {
  base.validate();
  if (base.dataset.empty()) throw ConfigError("dataset path is not set");
  const fs::path root(base.dataset);
  auto eval_set = load_split(root, "test");
  if (eval_set.empty()) eval_set = load_split(root, "val");
  if (eval_set.empty()) throw ConfigError("dataset has neither test nor val samples to evaluate on");
  check_compatible(base.network, eval_set);
  fs::create_directories(out_dir);

  AblationResult result;
  report::ComparisonTable table;
  for (const auto& cell : ablation_grid()) {
    AblationCellResult r;
    r.cell = cell;
    TrainConfig cfg = base;
    cfg.network.decoder_type = cell.decoder;
    cfg.network.progressive = cell.progressive;
    cfg.schedule = cell.schedule;
    if (log) log("cell " + cell.name + ": training");
    try {
      TrainResult trained = train(cfg, out_dir / cell.name);
      if (!trained.record.steps.empty()) r.last_step = trained.record.steps.back();
      r.report = evaluate(trained.network, eval_set);
      r.report.method = cell.name;
      r.report.schedule = cell.progressive ? loss::to_string(cell.schedule) : "final_only";
      io::write_file_atomic(out_dir / cell.name / "metrics.csv", r.report.to_csv());
      if (log) log("cell " + cell.name + ": " + r.report.summary());
    } catch (const std::exception& e) {
      r.failed = true;
      r.error = e.what();
      if (log) log("cell " + cell.name + ": FAILED (" + r.error + ")");
    }
    report::TableRow row;
    row.name = cell.name;
    row.failed = r.failed;
    if (!r.failed) {
      row.values = {r.report.psnr.count ? std::optional<double>(r.report.psnr.mean) : std::nullopt,
                    r.report.dsc.mean, r.report.ssim.mean};
    }
    table.rows.push_back(row);
    result.cells.push_back(std::move(r));
  }
  result.table_text = table.to_text();
  result.table_csv = table.to_csv();
  io::write_file_atomic(out_dir / "table.txt", result.table_text);
  io::write_file_atomic(out_dir / "table.csv", result.table_csv);
  return result;
}

}  // namespace px3d::train
