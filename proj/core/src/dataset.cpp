// SPDX-License-Identifier: Apache-2.0
#include "gpcn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gpcn/tensor_io.hpp"

namespace gpcn {

namespace {

constexpr const char* kSuffixes[] = {"asc", "mu", "nasc", "labels", "depth", "lesions"};
constexpr const char* kManifestHeader = "family\tsplit\tindex\tseed\tchecksum";

Tensor stack_lesions(const PhantomSample& s) {
  const std::int64_t h = s.asc.dim(1), w = s.asc.dim(2);
  std::vector<double> data;
  data.reserve(s.lesions.size() * static_cast<std::size_t>(h * w));
  for (const auto& l : s.lesions) data.insert(data.end(), l.data().begin(), l.data().end());
  return Tensor::from_data({static_cast<std::int64_t>(s.lesions.size()), h, w}, std::move(data));
}

}  // namespace

int test_count_for(int count) {
  if (count < 2) return 0;
  return std::max(1, static_cast<int>(std::lround(count / 10.0)));
}

std::string split_of(int index, int count) { return index >= count - test_count_for(count) ? "test" : "train"; }

std::uint64_t sample_seed(std::uint64_t base, const std::string& family, int index) {
  return derive_seed(derive_seed(base, io::adler32(family)), static_cast<std::uint64_t>(index));
}

std::filesystem::path sample_path(const std::filesystem::path& root, const ManifestEntry& entry,
                                  const std::string& suffix) {
  return root / entry.family / entry.split / (std::to_string(entry.index) + "." + suffix + ".gpcn");
}

std::vector<ManifestEntry> make_dataset(const std::filesystem::path& root, const DatasetSpec& spec) {
  if (spec.families.empty()) throw ValidationError("dataset: at least one family is required");
  if (spec.count_per_family <= 0) throw ValidationError("dataset: count_per_family must be positive");
  for (const auto& name : spec.families) find_family(name).validate();

  std::vector<ManifestEntry> entries;
  for (const auto& name : spec.families) {
    const DomainFamily& family = find_family(name);
    for (int i = 0; i < spec.count_per_family; ++i) {
      ManifestEntry e{name, split_of(i, spec.count_per_family), i, sample_seed(spec.seed, name, i), ""};
      const PhantomSample s = generate_phantom(e.seed, family, spec.height, spec.width);
      const Tensor tensors[] = {s.asc, s.mu, s.nasc, s.labels, s.depth, stack_lesions(s)};
      std::filesystem::create_directories(root / name / e.split);
      std::string all;
      for (std::size_t k = 0; k < std::size(kSuffixes); ++k) {
        const std::string bytes = io::encode_tensor(tensors[k]);
        io::write_file_atomic(sample_path(root, e, kSuffixes[k]), bytes);
        all += bytes;
      }
      e.checksum = io::checksum_hex(io::adler32(all));
      entries.push_back(std::move(e));
    }
  }
  io::write_file_atomic(root / "manifest.tsv", format_manifest(entries));
  return entries;
}

std::string format_manifest(const std::vector<ManifestEntry>& entries) {
  std::ostringstream os;
  os << kManifestHeader << '\n';
  for (const auto& e : entries) {
    os << e.family << '\t' << e.split << '\t' << e.index << '\t' << e.seed << '\t' << e.checksum << '\n';
  }
  return os.str();
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& root) {
  const auto path = root / "manifest.tsv";
  if (!std::filesystem::exists(path)) throw ValidationError("dataset manifest not found: " + path.string());
  std::istringstream is(io::read_file(path));
  std::string line;
  std::getline(is, line);
  if (line != kManifestHeader) throw io::FormatError("manifest header mismatch in " + path.string());
  std::vector<ManifestEntry> entries;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    if (!(ls >> e.family >> e.split >> e.index >> e.seed >> e.checksum)) {
      throw io::FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed manifest row");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

PhantomSample load_sample(const std::filesystem::path& root, const ManifestEntry& entry) {
  std::string all;
  Tensor t[std::size(kSuffixes)];
  for (std::size_t k = 0; k < std::size(kSuffixes); ++k) {
    const auto path = sample_path(root, entry, kSuffixes[k]);
    std::string bytes = io::read_file(path);
    std::istringstream is(bytes);
    t[k] = io::read_tensor(is);
    all += bytes;
  }
  if (io::checksum_hex(io::adler32(all)) != entry.checksum) {
    throw io::FormatError("checksum mismatch for " + entry.family + "/" + entry.split + "/" +
                          std::to_string(entry.index));
  }
  PhantomSample s;
  s.family = entry.family;
  s.asc = t[0];
  s.mu = t[1];
  s.nasc = t[2];
  s.labels = t[3];
  s.depth = t[4];
  const Tensor& lesions = t[5];
  const std::int64_t h = lesions.dim(1), w = lesions.dim(2);
  for (std::int64_t l = 0; l < lesions.dim(0); ++l) {
    const auto begin = lesions.data().begin() + l * h * w;
    s.lesions.push_back(Tensor::from_data({1, h, w}, std::vector<double>(begin, begin + h * w)));
  }
  return s;
}

std::vector<ManifestEntry> select(const std::vector<ManifestEntry>& entries, const std::string& split,
                                  const std::vector<std::string>& families) {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.split != split) continue;
    if (!families.empty() && std::find(families.begin(), families.end(), e.family) == families.end()) continue;
    out.push_back(e);
  }
  return out;
}

}  // namespace gpcn
