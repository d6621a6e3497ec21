// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint directory:
//   tensors.gpcn   concatenated portable tensor records
//   manifest.tsv   name <TAB> offset <TAB> shape <TAB> adler32 (one line per record)
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gpcn/model.hpp"
#include "gpcn/optim.hpp"

namespace gpcn {

struct NamedTensor {
  std::string name;
  Tensor value;
};

void write_named_tensors(const std::filesystem::path& dir, const std::vector<NamedTensor>& tensors);
/// Verifies every checksum in the manifest; throws on mismatch.
std::vector<NamedTensor> read_named_tensors(const std::filesystem::path& dir);

/// Saves model parameters, and Adam moments when `adam` is given.
void save_checkpoint(const std::filesystem::path& dir, const GpcnParams& params, const AdamState* adam = nullptr);

struct LoadedCheckpoint {
  GpcnParams params;
  std::optional<AdamState> adam;
};

/// `config` must describe the same architecture that was saved.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir, const ModelConfig& config);

}  // namespace gpcn
