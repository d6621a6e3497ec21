// SPDX-License-Identifier: Apache-2.0
#include "gpcn/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "gpcn/tensor_io.hpp"

namespace gpcn {

namespace fs = std::filesystem;

void write_named_tensors(const fs::path& dir, const std::vector<NamedTensor>& tensors) {
  fs::create_directories(dir);
  std::string blob;
  std::ostringstream manifest;
  for (const auto& [name, t] : tensors) {
    if (name.find_first_of("\t\n") != std::string::npos) throw ValidationError("tensor name contains tab/newline");
    const std::string rec = io::encode_tensor(t);
    manifest << name << '\t' << blob.size() << '\t' << shape_str(t.shape()) << '\t'
             << io::checksum_hex(io::adler32(rec)) << '\n';
    blob += rec;
  }
  io::write_file_atomic(dir / "tensors.gpcn", blob);
  io::write_file_atomic(dir / "manifest.tsv", manifest.str());
}

std::vector<NamedTensor> read_named_tensors(const fs::path& dir) {
  const std::string blob = io::read_file(dir / "tensors.gpcn");
  std::istringstream manifest(io::read_file(dir / "manifest.tsv"));
  std::vector<NamedTensor> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string name, offset_s, shape_s, sum_s;
    if (!std::getline(fields, name, '\t') || !std::getline(fields, offset_s, '\t') ||
        !std::getline(fields, shape_s, '\t') || !std::getline(fields, sum_s, '\t')) {
      throw io::FormatError("checkpoint manifest line " + std::to_string(line_no) + " is malformed");
    }
    const std::size_t offset = std::stoull(offset_s);
    if (offset > blob.size()) throw io::FormatError("checkpoint offset past end for " + name);
    std::istringstream rec(blob.substr(offset));
    Tensor t = io::read_tensor(rec);
    const std::string encoded = io::encode_tensor(t);
    if (io::checksum_hex(io::adler32(encoded)) != sum_s) {
      throw io::FormatError("checksum mismatch for tensor " + name);
    }
    if (shape_str(t.shape()) != shape_s) throw io::FormatError("shape mismatch for tensor " + name);
    out.push_back({name, std::move(t)});
  }
  return out;
}

void save_checkpoint(const fs::path& dir, const GpcnParams& params, const AdamState* adam) {
  std::vector<NamedTensor> records;
  const auto named = params.named_parameters();
  for (const auto& [name, t] : named) records.push_back({name, t});
  if (adam) {
    records.push_back({"adam.step", Tensor::scalar(static_cast<double>(adam->step))});
    for (std::size_t i = 0; i < named.size(); ++i) {
      records.push_back({"adam.m." + named[i].first, Tensor::from_data(named[i].second.shape(), adam->m[i])});
      records.push_back({"adam.v." + named[i].first, Tensor::from_data(named[i].second.shape(), adam->v[i])});
    }
  }
  write_named_tensors(dir, records);
}

LoadedCheckpoint load_checkpoint(const fs::path& dir, const ModelConfig& config) {
  std::map<std::string, Tensor> by_name;
  for (auto& rec : read_named_tensors(dir)) by_name.emplace(rec.name, std::move(rec.value));

  LoadedCheckpoint out{GpcnParams::init(config), std::nullopt};
  const auto named = out.params.named_parameters();
  for (const auto& [name, t] : named) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ValidationError("checkpoint is missing parameter " + name);
    if (it->second.shape() != t.shape()) {
      throw ValidationError("checkpoint parameter " + name + " has shape " + shape_str(it->second.shape()) +
                            ", model expects " + shape_str(t.shape()));
    }
    Tensor dst = t;
    std::copy(it->second.data().begin(), it->second.data().end(), dst.mutable_data().begin());
  }
  if (auto it = by_name.find("adam.step"); it != by_name.end()) {
    AdamState adam = AdamState::for_params(out.params.parameters());
    adam.step = static_cast<std::int64_t>(it->second.item());
    for (std::size_t i = 0; i < named.size(); ++i) {
      const auto m = by_name.find("adam.m." + named[i].first);
      const auto v = by_name.find("adam.v." + named[i].first);
      if (m == by_name.end() || v == by_name.end()) throw ValidationError("checkpoint Adam state incomplete");
      adam.m[i].assign(m->second.data().begin(), m->second.data().end());
      adam.v[i].assign(v->second.data().begin(), v->second.data().end());
    }
    out.adam = std::move(adam);
  }
  return out;
}

}  // namespace gpcn
