// SPDX-License-Identifier: Apache-2.0
//
// INI-style run configuration:
//
//   # comment
//   [model]
//   channels = 8
//   [data]
//   families = siemens_fdg, siemens_mfbg
//
// Unknown sections and keys are rejected with the offending line number.
// Relative paths resolve against the directory of the config file.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gpcn/dataset.hpp"
#include "gpcn/model.hpp"

namespace gpcn {

struct TrainConfig {
  std::int64_t iterations = 2000;
  std::int64_t batch_size = 2;
  double lr = 2e-4;
  std::int64_t log_interval = 10;
  std::int64_t checkpoint_interval = 500;
  std::uint64_t seed = 0;  // batch sampling
  std::string mode = "joint";
  std::string single_family = "siemens_fdg";
  std::vector<std::uint64_t> ablation_seeds = {0, 1, 2};
  std::filesystem::path resume;  // checkpoint directory to continue from
};

struct EvalConfig {
  std::string split = "test";
  std::vector<std::string> families;  // empty: every family in the dataset
  std::filesystem::path checkpoint;   // empty: identity-initialized model
  bool psnr = true, ssim = true, nmae = true, nmse = true;
  bool lesions = true;
  int depth_bins = 8;
  int hist_bins = 64;
  int glcm_levels = 16;
};

struct DoseConfig {
  std::filesystem::path exams;
  std::filesystem::path k_table;
};

struct RunConfig {
  ModelConfig model;
  DatasetSpec data;
  std::filesystem::path data_root = "data";
  TrainConfig train;
  EvalConfig eval;
  DoseConfig dose;

  RunConfig();
  void validate() const;
  /// Applies a single base seed to the data, model and batch-sampling seeds.
  void apply_seed(std::uint64_t seed);
};

/// Parses config text. `origin` labels error messages; `base_dir` resolves relative paths.
RunConfig parse_run_config(const std::string& text, const std::string& origin = "config",
                           const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical rendering with every key; parsing it back yields the same config.
std::string format_run_config(const RunConfig& config);

}  // namespace gpcn
