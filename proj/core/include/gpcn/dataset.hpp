// SPDX-License-Identifier: Apache-2.0
//
// On-disk phantom datasets:
//   <root>/<family>/<split>/<index>.{asc,mu,nasc,labels,depth,lesions}.gpcn
//   <root>/manifest.tsv   family, split, index, seed, checksum
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gpcn/phantom.hpp"

namespace gpcn {

struct DatasetSpec {
  std::vector<std::string> families;
  int count_per_family = 40;
  std::int64_t height = 64;
  std::int64_t width = 64;
  std::uint64_t seed = 0;
};

struct ManifestEntry {
  std::string family;
  std::string split;  // "train" or "test"
  int index = 0;
  std::uint64_t seed = 0;
  std::string checksum;  // Adler-32 over the sample's files in suffix order
};

/// Test-split size for a family of `count` samples (a 9:1 split).
int test_count_for(int count);
std::string split_of(int index, int count);
std::uint64_t sample_seed(std::uint64_t base, const std::string& family, int index);

/// Generates and writes every sample, then the manifest. Returns the manifest rows.
std::vector<ManifestEntry> make_dataset(const std::filesystem::path& root, const DatasetSpec& spec);

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& root);
std::string format_manifest(const std::vector<ManifestEntry>& entries);

std::filesystem::path sample_path(const std::filesystem::path& root, const ManifestEntry& entry,
                                  const std::string& suffix);
PhantomSample load_sample(const std::filesystem::path& root, const ManifestEntry& entry);

/// Manifest rows for one split, optionally restricted to a set of families
/// (empty = all), in manifest order.
std::vector<ManifestEntry> select(const std::vector<ManifestEntry>& entries, const std::string& split,
                                  const std::vector<std::string>& families = {});

}  // namespace gpcn
