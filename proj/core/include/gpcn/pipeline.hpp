// SPDX-License-Identifier: Apache-2.0
//
// End-to-end commands shared by the command-line tool and the acceptance suite.
// Every command is a pure function of its RunConfig: outputs are written with
// full precision in a fixed row order so repeated runs are byte-identical.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "gpcn/checkpoint.hpp"
#include "gpcn/dataset.hpp"
#include "gpcn/metrics.hpp"
#include "gpcn/run_config.hpp"

namespace gpcn {

/// Writes `format_run_config(config)` to <dir>/resolved_config.ini.
void write_resolved_config(const std::filesystem::path& dir, const RunConfig& config);

std::vector<ManifestEntry> run_gen_data(const RunConfig& config, const std::filesystem::path& root);

struct TrainLogRow {
  std::int64_t iteration = 0;
  LossBreakdown loss;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;
  double best_window_loss = 0.0;
  std::string batch_digest;  // Adler-32 of the sampled sample-index sequence
  std::int64_t start_iteration = 0;
};

/// Families consumed by `train` under the configured mode.
std::vector<std::string> training_families(const RunConfig& config);

/// Trains into <out>: train_log.csv, checkpoints/{final,best,last}, resolved_config.ini.
/// Resumes from config.train.resume when set.
TrainResult run_train(const RunConfig& config, const std::filesystem::path& out, std::ostream* progress = nullptr);

struct MethodSummary {
  double psnr = 0.0, ssim = 0.0, nmae = 0.0, nmse = 0.0;
  std::size_t samples = 0;
  std::size_t psnr_excluded = 0;
};

struct EvalResult {
  // family -> method ("NASC" or "GPCN") -> means. Family "ALL" pools every sample.
  std::map<std::string, std::map<std::string, MethodSummary>> summary;
  std::map<std::string, std::vector<double>> depth_quartiles;        // method -> 4 values
  std::map<std::string, metrics::DepthProfile> depth_profile;        // method -> curve
  std::map<std::string, std::map<Region, double>> region_bias;       // method -> region -> mean %
  std::map<std::string, metrics::JointHistogram> joint;              // method -> pooled histogram
  std::vector<std::string> files;  // CSVs written, in order
};

/// Loads config.eval.checkpoint (identity initialization when empty).
GpcnParams load_eval_model(const RunConfig& config);

/// Evaluates `params` on the configured split. Writes the CSV bundle into
/// `out` unless it is empty.
EvalResult run_eval(const RunConfig& config, const GpcnParams& params, const std::filesystem::path& out);

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  MethodSummary metrics;
  std::string batch_digest;
  double train_seconds = 0.0;  // wall clock; not written to any CSV
};

struct AblationResult {
  std::vector<AblationRow> runs;
  // variant -> mean over seeds, rows ordered w/o MBCR, w/o FASD, GPCN
  std::vector<std::pair<std::string, MethodSummary>> table;
  MethodSummary nasc;
};

/// Trains and evaluates each variant for each configured seed under <out>/seed_<s>/<variant>,
/// then writes ablation.csv, ablation_runs.csv.
AblationResult run_ablate(const RunConfig& config, const std::filesystem::path& out,
                          std::ostream* progress = nullptr);

/// Exports depth_profile.csv, region_bias.csv, joint_hist.csv and spectrum.csv.
void run_plot_data(const RunConfig& config, const std::filesystem::path& out);

/// Reads config.dose.{exams,k_table}; writes dose_records.csv and dose_summary.csv.
void run_dose(const RunConfig& config, const std::filesystem::path& out);

}  // namespace gpcn
