// SPDX-License-Identifier: Apache-2.0
#include "gpcn/run_config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include "gpcn/tensor_io.hpp"

namespace gpcn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Ctx {
  std::string origin;
  int line;
  std::string key;

  [[noreturn]] void fail(const std::string& what) const {
    throw ValidationError(origin + ":" + std::to_string(line) + ": " + (key.empty() ? "" : key + ": ") + what);
  }
};

template <typename T>
T parse_integer(const std::string& v, const Ctx& c) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) c.fail("expected an integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& v, const Ctx& c) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) c.fail("expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& v, const Ctx& c) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  c.fail("expected a boolean, got '" + v + "'");
}

std::filesystem::path resolve(const std::string& v, const std::filesystem::path& base) {
  if (v.empty()) return {};
  std::filesystem::path p(v);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

using Setter = std::function<void(RunConfig&, const std::string&, const Ctx&)>;
using Table = std::map<std::string, std::map<std::string, Setter>>;

Table make_table(const std::filesystem::path& base) {
  Table t;
  auto& m = t["model"];
  m["stages"] = [](RunConfig& r, const std::string& v, const Ctx& c) { r.model.stages = parse_integer<int>(v, c); };
  m["channels"] = [](RunConfig& r, const std::string& v, const Ctx& c) {
    r.model.channels = parse_integer<std::int64_t>(v, c);
  };
  m["state_dim"] = [](RunConfig& r, const std::string& v, const Ctx& c) {
    r.model.state_dim = parse_integer<std::int64_t>(v, c);
  };
  m["expansion"] = [](RunConfig& r, const std::string& v, const Ctx& c) { r.model.expansion = parse_double(v, c); };
  m["wavelet_levels"] = [](RunConfig& r, const std::string& v, const Ctx& c) {
    r.model.wavelet_levels = parse_integer<int>(v, c);
  };
  m["lambda_freq"] = [](RunConfig& r, const std::string& v, const Ctx& c) { r.model.lambda_freq = parse_double(v, c); };
  m["fasd_hidden"] = [](RunConfig& r, const std::string& v, const Ctx& c) {
    r.model.fasd_hidden = parse_integer<std::int64_t>(v, c);
  };
  m["enable_mbcr"] = [](RunConfig& r, const std::string& v, const Ctx& c) { r.model.enable_mbcr = parse_bool(v, c); };
  m["enable_fasd"] = [](RunConfig& r, const std::string& v, const Ctx& c) { r.model.enable_fasd = parse_bool(v, c); };
  m["seed"] = [](RunConfig& r, const std::string& v, const Ctx& c) {
    r.model.seed = parse_integer<std::uint64_t>(v, c);
  };

  auto& d = t["data"];
  d["root"] = [base](RunConfig& r, const std::string& v, const Ctx&) { r.data_root = resolve(v, base); };
  d["families"] = [](RunConfig& r, const std::string& v, const Ctx&) { r.data.families = split_list(v); };
  d["count_per_family"] = [](RunConfig& r, const std::string& v, const Ctx& c) {
    r.data.count_per_family = parse_integer<int>(v, c);
  };
  d["height"] = [](RunConfig& r, const std::string& v, const Ctx& c) {
    r.data.height = parse_integer<std::int64_t>(v, c);
  };
  d["width"] = [](RunConfig& r, const std::string& v, const Ctx& c) {
    r.data.width = parse_integer<std::int64_t>(v, c);
  };
  d["seed"] = [](RunConfig& r, const std::string& v, const Ctx& c) {
    r.data.seed = parse_integer<std::uint64_t>(v, c);
  };

  auto& tr = t["train"];
  tr["iterations"] = [](RunConfig& r, const std::string& v, const Ctx& c) {
    r.train.iterations = parse_integer<std::int64_t>(v, c);
  };
  tr["batch_size"] = [](RunConfig& r, const std::string& v, const Ctx& c) {
    r.train.batch_size = parse_integer<std::int64_t>(v, c);
  };
  tr["lr"] = [](RunConfig& r, const std::string& v, const Ctx& c) { r.train.lr = parse_double(v, c); };
  tr["log_interval"] = [](RunConfig& r, const std::string& v, const Ctx& c) {
    r.train.log_interval = parse_integer<std::int64_t>(v, c);
  };
  tr["checkpoint_interval"] = [](RunConfig& r, const std::string& v, const Ctx& c) {
    r.train.checkpoint_interval = parse_integer<std::int64_t>(v, c);
  };
  tr["seed"] = [](RunConfig& r, const std::string& v, const Ctx& c) {
    r.train.seed = parse_integer<std::uint64_t>(v, c);
  };
  tr["mode"] = [](RunConfig& r, const std::string& v, const Ctx&) { r.train.mode = v; };
  tr["single_family"] = [](RunConfig& r, const std::string& v, const Ctx&) { r.train.single_family = v; };
  tr["ablation_seeds"] = [](RunConfig& r, const std::string& v, const Ctx& c) {
    r.train.ablation_seeds.clear();
    for (const auto& s : split_list(v)) r.train.ablation_seeds.push_back(parse_integer<std::uint64_t>(s, c));
  };
  tr["resume"] = [base](RunConfig& r, const std::string& v, const Ctx&) { r.train.resume = resolve(v, base); };

  auto& e = t["eval"];
  e["split"] = [](RunConfig& r, const std::string& v, const Ctx&) { r.eval.split = v; };
  e["families"] = [](RunConfig& r, const std::string& v, const Ctx&) { r.eval.families = split_list(v); };
  e["checkpoint"] = [base](RunConfig& r, const std::string& v, const Ctx&) { r.eval.checkpoint = resolve(v, base); };
  e["psnr"] = [](RunConfig& r, const std::string& v, const Ctx& c) { r.eval.psnr = parse_bool(v, c); };
  e["ssim"] = [](RunConfig& r, const std::string& v, const Ctx& c) { r.eval.ssim = parse_bool(v, c); };
  e["nmae"] = [](RunConfig& r, const std::string& v, const Ctx& c) { r.eval.nmae = parse_bool(v, c); };
  e["nmse"] = [](RunConfig& r, const std::string& v, const Ctx& c) { r.eval.nmse = parse_bool(v, c); };
  e["lesions"] = [](RunConfig& r, const std::string& v, const Ctx& c) { r.eval.lesions = parse_bool(v, c); };
  e["depth_bins"] = [](RunConfig& r, const std::string& v, const Ctx& c) { r.eval.depth_bins = parse_integer<int>(v, c); };
  e["hist_bins"] = [](RunConfig& r, const std::string& v, const Ctx& c) { r.eval.hist_bins = parse_integer<int>(v, c); };
  e["glcm_levels"] = [](RunConfig& r, const std::string& v, const Ctx& c) {
    r.eval.glcm_levels = parse_integer<int>(v, c);
  };

  auto& ds = t["dose"];
  ds["exams"] = [base](RunConfig& r, const std::string& v, const Ctx&) { r.dose.exams = resolve(v, base); };
  ds["k_table"] = [base](RunConfig& r, const std::string& v, const Ctx&) { r.dose.k_table = resolve(v, base); };
  return t;
}

template <typename T>
std::string join(const std::vector<T>& items) {
  std::ostringstream os;
  for (std::size_t i = 0; i < items.size(); ++i) os << (i ? ", " : "") << items[i];
  return os.str();
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

const char* fmt_bool(bool b) { return b ? "true" : "false"; }

}  // namespace

RunConfig::RunConfig() { data.families = joint_family_names(); }

void RunConfig::validate() const {
  model.validate();
  if (data.families.empty()) throw ValidationError("data.families must list at least one family");
  for (const auto& f : data.families) find_family(f);
  if (data.count_per_family < 1) throw ValidationError("data.count_per_family must be positive");
  if (train.iterations < 0) throw ValidationError("train.iterations must be non-negative");
  if (train.batch_size < 1) throw ValidationError("train.batch_size must be positive");
  if (!(train.lr > 0.0)) throw ValidationError("train.lr must be positive");
  if (train.log_interval < 1) throw ValidationError("train.log_interval must be positive");
  if (train.checkpoint_interval < 1) throw ValidationError("train.checkpoint_interval must be positive");
  if (train.mode != "joint" && train.mode != "single") throw ValidationError("train.mode must be joint or single");
  find_family(train.single_family);
  if (train.ablation_seeds.empty()) throw ValidationError("train.ablation_seeds must not be empty");
  if (eval.split != "train" && eval.split != "test") throw ValidationError("eval.split must be train or test");
  for (const auto& f : eval.families) find_family(f);
  if (eval.depth_bins < 1 || eval.hist_bins < 1 || eval.glcm_levels < 1) {
    throw ValidationError("eval bin counts must be positive");
  }
}

void RunConfig::apply_seed(std::uint64_t seed) {
  data.seed = seed;
  model.seed = seed;
  train.seed = seed;
}

RunConfig parse_run_config(const std::string& text, const std::string& origin, const std::filesystem::path& base_dir) {
  const Table table = make_table(base_dir);
  RunConfig config;
  std::istringstream is(text);
  std::string raw, section;
  int lineno = 0;
  std::map<std::string, int> seen;
  while (std::getline(is, raw)) {
    ++lineno;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const Ctx at{origin, lineno, ""};
    if (line.front() == '[') {
      if (line.back() != ']') at.fail("unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!table.contains(section)) at.fail("unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) at.fail("expected 'key = value'");
    if (section.empty()) at.fail("key outside of any section");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const Ctx ctx{origin, lineno, section + "." + key};
    const auto& keys = table.at(section);
    const auto it = keys.find(key);
    if (it == keys.end()) ctx.fail("unknown key");
    if (const auto [pos, inserted] = seen.emplace(ctx.key, lineno); !inserted) {
      ctx.fail("duplicate key (first set on line " + std::to_string(pos->second) + ")");
    }
    it->second(config, value, ctx);
  }
  config.validate();
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ValidationError("config file not found: " + path.string());
  return parse_run_config(io::read_file(path), path.string(), std::filesystem::absolute(path).parent_path());
}

std::string format_run_config(const RunConfig& c) {
  std::ostringstream os;
  os << "[model]\n"
     << "stages = " << c.model.stages << '\n'
     << "channels = " << c.model.channels << '\n'
     << "state_dim = " << c.model.state_dim << '\n'
     << "expansion = " << fmt_double(c.model.expansion) << '\n'
     << "wavelet_levels = " << c.model.wavelet_levels << '\n'
     << "lambda_freq = " << fmt_double(c.model.lambda_freq) << '\n'
     << "fasd_hidden = " << c.model.fasd_hidden << '\n'
     << "enable_mbcr = " << fmt_bool(c.model.enable_mbcr) << '\n'
     << "enable_fasd = " << fmt_bool(c.model.enable_fasd) << '\n'
     << "seed = " << c.model.seed << "\n\n"
     << "[data]\n"
     << "root = " << c.data_root.string() << '\n'
     << "families = " << join(c.data.families) << '\n'
     << "count_per_family = " << c.data.count_per_family << '\n'
     << "height = " << c.data.height << '\n'
     << "width = " << c.data.width << '\n'
     << "seed = " << c.data.seed << "\n\n"
     << "[train]\n"
     << "iterations = " << c.train.iterations << '\n'
     << "batch_size = " << c.train.batch_size << '\n'
     << "lr = " << fmt_double(c.train.lr) << '\n'
     << "log_interval = " << c.train.log_interval << '\n'
     << "checkpoint_interval = " << c.train.checkpoint_interval << '\n'
     << "seed = " << c.train.seed << '\n'
     << "mode = " << c.train.mode << '\n'
     << "single_family = " << c.train.single_family << '\n'
     << "ablation_seeds = " << join(c.train.ablation_seeds) << '\n'
     << "resume = " << c.train.resume.string() << "\n\n"
     << "[eval]\n"
     << "split = " << c.eval.split << '\n'
     << "families = " << join(c.eval.families) << '\n'
     << "checkpoint = " << c.eval.checkpoint.string() << '\n'
     << "psnr = " << fmt_bool(c.eval.psnr) << '\n'
     << "ssim = " << fmt_bool(c.eval.ssim) << '\n'
     << "nmae = " << fmt_bool(c.eval.nmae) << '\n'
     << "nmse = " << fmt_bool(c.eval.nmse) << '\n'
     << "lesions = " << fmt_bool(c.eval.lesions) << '\n'
     << "depth_bins = " << c.eval.depth_bins << '\n'
     << "hist_bins = " << c.eval.hist_bins << '\n'
     << "glcm_levels = " << c.eval.glcm_levels << "\n\n"
     << "[dose]\n"
     << "exams = " << c.dose.exams.string() << '\n'
     << "k_table = " << c.dose.k_table.string() << '\n';
  return os.str();
}

}  // namespace gpcn
