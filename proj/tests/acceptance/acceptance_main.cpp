// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance run. Progress goes to stderr; stdout receives one
// "criterion N (title): PASS|FAIL - details" line per criterion, in order, at the end.
// Exit status 0 only when every criterion passes.
#include <sys/wait.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "dir_snapshot.hpp"
#include "gpcn/dose.hpp"
#include "gpcn/pipeline.hpp"
#include "grad_suite.hpp"
#include "metric_oracles.hpp"
#include "oracles.hpp"

namespace {

namespace fs = std::filesystem;
using namespace gpcn;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Options {
  fs::path work = "acceptance_work";
  std::int64_t iterations = 500;
  fs::path cli;
  fs::path source_dir;
  std::vector<int> only;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << v;
  return os.str();
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ---------------------------------------------------------------------------
// Shared toy benchmark: 64x64 phantoms, the five joint families plus the
// held-out family, 40 samples each (36 train / 4 test).

RunConfig toy_config(const Options& o) {
  RunConfig c;
  c.model.stages = 3;
  c.model.channels = 8;
  c.model.state_dim = 16;
  c.model.expansion = 2.0;
  c.model.fasd_hidden = 16;
  c.model.lambda_freq = 1.0;
  c.data.families = joint_family_names();
  c.data.count_per_family = 40;
  c.data.height = 64;
  c.data.width = 64;
  c.data.seed = 0;
  c.data_root = o.work / "data";
  c.train.iterations = o.iterations;
  c.train.batch_size = 2;
  c.train.lr = 2e-4;
  c.train.log_interval = 50;
  c.train.checkpoint_interval = 250;
  c.train.ablation_seeds = {0, 1, 2};
  c.eval.families = joint_family_names();
  return c;
}

std::vector<std::string> all_families() {
  auto f = joint_family_names();
  f.push_back("siemens_fapi");
  return f;
}

void ensure_dataset(const RunConfig& toy) {
  RunConfig all = toy;
  all.data.families = all_families();
  run_gen_data(all, toy.data_root);
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  using testing::max_abs_diff;
  const Tensor x = testing::random_tensor({2, 3, 16, 16}, rng);
  const double dwt_err = max_abs_diff(idwt2(dwt2(x)), x);

  const Tensor x8 = testing::random_tensor({1, 1, 8, 8}, rng);
  const ComplexSpectrum k8 = fft2(x8), n8 = testing::naive_dft(x8);
  const double dft_err = std::max(max_abs_diff(k8.re, n8.re), max_abs_diff(k8.im, n8.im));

  const Tensor x64 = testing::random_tensor({1, 1, 64, 64}, rng);
  const ComplexSpectrum k64 = fft2(x64);
  double e_img = 0.0, e_spec = 0.0;
  for (double v : x64.data()) e_img += v * v;
  for (std::size_t i = 0; i < k64.re.data().size(); ++i) {
    e_spec += k64.re.data()[i] * k64.re.data()[i] + k64.im.data()[i] * k64.im.data()[i];
  }
  const double parseval = std::abs(e_img - e_spec / (64.0 * 64.0)) / e_img;

  const ComplexSpectrum back = from_amp_phase(to_amp_phase(k64));
  const double recomb = std::max(max_abs_diff(back.re, k64.re), max_abs_diff(back.im, k64.im));
  const double secs = seconds_since(t0);

  const bool pass = dwt_err <= 1e-10 && dft_err <= 1e-10 && parseval <= 1e-9 && recomb <= 1e-8 && secs < 5.0;
  return {pass, "dwt roundtrip " + sci(dwt_err) + ", fft vs dft " + sci(dft_err) + ", parseval rel " +
                    sci(parseval) + ", amp/phase recombination " + sci(recomb) + ", " + fmt(secs, 3) + " s"};
}

Outcome criterion2() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::vector<std::string> failed;
  int count = 0;
  auto record = [&](const std::string& name, const testing::GradcheckResult& r) {
    ++count;
    if (r.worst_rel > worst) worst = r.worst_rel, worst_name = name;
    if (!(r.worst_rel <= testing::kGradTol)) failed.push_back(name);
  };
  for (const auto& c : testing::op_cases()) record(c.name, testing::run_op_case(c));
  for (const auto& c : testing::composite_cases()) {
    const auto r = c.run();
    std::cerr << "  gradcheck " << c.name << ": " << sci(r.worst_rel) << '\n';
    record(c.name, r);
  }
  const double secs = seconds_since(t0);
  std::string detail = std::to_string(count) + " cases, worst rel err " + sci(worst) + " (" + worst_name + "), " +
                       fmt(secs, 3) + " s";
  for (const auto& f : failed) detail += ", failed: " + f;
  return {failed.empty() && secs < 120.0, detail};
}

Outcome criterion3(const RunConfig& toy, const Options& o) {
  const auto manifest = read_manifest(toy.data_root);
  const auto entries = select(manifest, "test", toy.eval.families);
  std::vector<double> batch;
  for (const auto& e : entries) {
    const Tensor nasc = load_sample(toy.data_root, e).nasc;
    batch.insert(batch.end(), nasc.data().begin(), nasc.data().end());
  }
  const auto n = static_cast<std::int64_t>(entries.size());
  const Tensor x = Tensor::from_data({n, 1, toy.data.height, toy.data.width}, batch);
  bool bitwise = true;
  for (Ablation a : {Ablation::kFull, Ablation::kWithoutMbcr, Ablation::kWithoutFasd}) {
    NoGradGuard guard;
    const Tensor y = gpcn_forward(x, GpcnParams::init(ablation_variant(toy.model, a)));
    bitwise = bitwise && testing::bitwise_equal(x, y);
  }
  const EvalResult r = run_eval(toy, GpcnParams::init(toy.model), o.work / "identity_eval");
  bool rows_equal = true;
  for (const auto& [family, methods] : r.summary) {
    const auto& g = methods.at("GPCN");
    const auto& b = methods.at("NASC");
    rows_equal = rows_equal && g.psnr == b.psnr && g.ssim == b.ssim && g.nmae == b.nmae && g.nmse == b.nmse;
  }
  return {bitwise && rows_equal, std::string("forward bitwise identity on ") + std::to_string(n) +
                                     " test images for 3 variants: " + (bitwise ? "yes" : "no") +
                                     ", eval rows equal NASC for " + std::to_string(r.summary.size()) +
                                     " families incl. ALL: " + (rows_equal ? "yes" : "no")};
}

Outcome criterion9() {
  Rng rng(909);
  double worst = 0.0;
  std::string worst_name;
  auto track = [&](const std::string& name, double a, double b) {
    const double d = std::abs(a - b);
    if (!(d <= worst)) worst = d, worst_name = name;
  };
  const std::int64_t h = 24, w = 20;
  const std::size_t n = static_cast<std::size_t>(h * w);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> p(n), r(n), mask(n);
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = rng.uniform(0.05, 2.0);
      p[i] = r[i] + rng.uniform(-0.4, 0.4);
      mask[i] = rng.uniform() < 0.7 ? 1.0 : 0.0;
    }
    const double range = *std::max_element(r.begin(), r.end());
    track("psnr", metrics::psnr(p, r), testing::psnr_ref(p, r, range));
    track("psnr_range", metrics::psnr(p, r, 3.0), testing::psnr_ref(p, r, 3.0));
    metrics::SsimOptions so;
    so.data_range = range;
    track("ssim", metrics::ssim(p, r, h, w, so), testing::ssim_ref(p, r, h, w, range));
    track("nmae", metrics::nmae(p, r), testing::nmae_ref(p, r));
    track("nmse", metrics::nmse(p, r), testing::nmse_ref(p, r));
    track("pearson", metrics::pearson(p, r), testing::pearson_two_pass(p, r));
    const auto g = metrics::glcm_features(p, mask, h, w);
    const auto gr = testing::glcm_ref(p, mask, h, w);
    track("glcm_contrast", g.contrast, gr.contrast);
    track("glcm_homogeneity", g.homogeneity, gr.homogeneity);
  }
  return {worst <= 1e-8, "10 random trials x 8 metrics, worst abs diff " + sci(worst) + " (" + worst_name + ")"};
}

Outcome criterion10(const RunConfig& toy, const Options& o) {
  Rng rng(1010);
  double worst = 0.0;
  std::vector<dose::DoseRecord> records;
  for (int i = 0; i < 101; ++i) {
    const double ctdi = rng.uniform(1.0, 20.0), len = rng.uniform(20.0, 200.0), k = rng.uniform(0.01, 0.03);
    const auto rec = dose::compute_dose(ctdi, len, k);
    worst = std::max({worst, std::abs(rec.dlp - ctdi * len), std::abs(rec.effective_dose - ctdi * len * k)});
    records.push_back(rec);
  }
  std::vector<double> e;
  for (const auto& r : records) e.push_back(r.effective_dose);
  std::sort(e.begin(), e.end());
  double sum = 0.0;
  for (double v : e) sum += v;
  const auto agg = dose::aggregate(records);
  const double agg_err = std::max({std::abs(agg.mean - sum / static_cast<double>(e.size())),
                                   std::abs(agg.median - e[e.size() / 2]), std::abs(agg.min - e.front()),
                                   std::abs(agg.max - e.back())});
  std::vector<dose::DoseRecord> even(records.begin(), records.begin() + 10);
  std::vector<double> ee;
  for (const auto& r : even) ee.push_back(r.effective_dose);
  std::sort(ee.begin(), ee.end());
  const double even_err = std::abs(dose::aggregate(even).median - 0.5 * (ee[4] + ee[5]));

  RunConfig c = toy;
  c.dose.exams = o.source_dir / "data/exams.example.tsv";
  c.dose.k_table = o.source_dir / "data/k_factors.example.tsv";
  run_dose(c, o.work / "dose");
  const std::string summary = io::read_file(o.work / "dose/dose_summary.csv");
  const bool labeled = summary.find("non-authoritative example") != std::string::npos &&
                       !dose::parse_k_table(io::read_file(c.dose.k_table)).authoritative;
  const bool pass = worst <= 1e-12 && agg_err <= 1e-12 && even_err <= 1e-12 && labeled;
  return {pass, "hand products worst " + sci(worst) + ", aggregate vs brute force " + sci(std::max(agg_err, even_err)) +
                    ", example table labeled non-authoritative: " + (labeled ? "yes" : "no")};
}

// ---------------------------------------------------------------------------

struct ToyRuns {
  AblationResult ablation;
  EvalResult joint_eval;  // seed-0 full model on the joint test split
  double joint_train_seconds = 0.0;
  std::size_t train_count = 0, test_count = 0;
};

ToyRuns train_toy(const RunConfig& toy, const Options& o) {
  ToyRuns t;
  const auto manifest = read_manifest(toy.data_root);
  t.train_count = select(manifest, "train", toy.data.families).size();
  t.test_count = select(manifest, "test", toy.data.families).size();
  t.ablation = run_ablate(toy, o.work / "ablate", &std::cerr);
  for (const auto& r : t.ablation.runs) {
    if (r.variant == "GPCN" && r.seed == 0) t.joint_train_seconds = r.train_seconds;
  }
  RunConfig rc = toy;
  rc.model.seed = 0;
  rc.train.seed = 0;
  rc.eval.checkpoint = o.work / "ablate/seed_0/GPCN/checkpoints/final";
  t.joint_eval = run_eval(rc, load_eval_model(rc), o.work / "joint_eval");
  return t;
}

Outcome criterion4(const RunConfig& toy, const ToyRuns& t) {
  const auto& all = t.joint_eval.summary.at("ALL");
  const auto& g = all.at("GPCN");
  const auto& b = all.at("NASC");
  const double gain = g.psnr - b.psnr;
  const bool sizes = toy.data.families.size() == 5 && t.train_count >= 180 && t.test_count >= 20;
  const bool pass = sizes && gain >= 6.0 && g.ssim > b.ssim && t.joint_train_seconds <= 45 * 60 &&
                    toy.train.iterations <= 10000;
  return {pass, std::to_string(t.train_count) + " train / " + std::to_string(t.test_count) + " test, " +
                    std::to_string(toy.train.iterations) + " iterations: PSNR " + fmt(b.psnr) + " -> " + fmt(g.psnr) +
                    " dB (gain " + fmt(gain, 3) + "), SSIM " + fmt(b.ssim) + " -> " + fmt(g.ssim) + ", train " +
                    fmt(t.joint_train_seconds, 4) + " s"};
}

Outcome criterion5(const ToyRuns& t) {
  std::map<std::string, double> psnr;
  for (const auto& [name, m] : t.ablation.table) psnr[name] = m.psnr;
  std::string per_seed;
  for (const auto& r : t.ablation.runs) per_seed += " " + r.variant + "@" + std::to_string(r.seed) + "=" + fmt(r.metrics.psnr);
  const bool digests = std::all_of(t.ablation.runs.begin(), t.ablation.runs.end(), [&](const AblationRow& r) {
    return std::count_if(t.ablation.runs.begin(), t.ablation.runs.end(), [&](const AblationRow& q) {
             return q.seed == r.seed && q.batch_digest != r.batch_digest;
           }) == 0;
  });
  const bool pass = digests && psnr.at("GPCN") > psnr.at("w/o FASD") && psnr.at("w/o FASD") > psnr.at("w/o MBCR");
  return {pass, "mean PSNR over " + std::to_string(t.ablation.runs.size() / 3) + " seeds: GPCN " +
                    fmt(psnr.at("GPCN")) + " > w/o FASD " + fmt(psnr.at("w/o FASD")) + " > w/o MBCR " +
                    fmt(psnr.at("w/o MBCR")) + ", shared batches " + (digests ? "yes" : "no") + ";" + per_seed};
}

Outcome criterion6(const RunConfig& toy, const Options& o) {
  RunConfig c = toy;
  c.train.mode = "single";
  c.train.single_family = single_domain_family_name();
  c.model.seed = 0;
  c.train.seed = 0;
  c.eval.families.clear();
  for (const auto& f : all_families()) {
    if (f != c.train.single_family) c.eval.families.push_back(f);
  }
  std::cerr << "single-domain training on " << c.train.single_family << '\n';
  const TrainResult tr = run_train(c, o.work / "single", &std::cerr);
  c.eval.checkpoint = tr.final_checkpoint;
  const EvalResult r = run_eval(c, load_eval_model(c), o.work / "single/eval");
  bool pass = c.eval.families.size() == 5;
  std::string detail = "trained on " + c.train.single_family + ";";
  for (const auto& f : c.eval.families) {
    const auto& m = r.summary.at(f);
    const double g = m.at("GPCN").psnr, b = m.at("NASC").psnr;
    pass = pass && g > b;
    detail += " " + f + " " + fmt(b) + "->" + fmt(g);
  }
  return {pass, detail + " dB"};
}

Outcome criterion7(const ToyRuns& t) {
  const auto& g = t.joint_eval.depth_quartiles.at("GPCN");
  const auto& b = t.joint_eval.depth_quartiles.at("NASC");
  const double deep = g[3] / b[3];
  const double ratio_g = g[3] / g[0], ratio_b = b[3] / b[0];
  const bool pass = deep <= 0.5 && ratio_g <= 0.5 * ratio_b;
  return {pass, "deepest quartile error NASC " + fmt(b[3]) + " GPCN " + fmt(g[3]) + " (x" + fmt(deep, 3) +
                    "); deep/shallow ratio NASC " + fmt(ratio_b) + " GPCN " + fmt(ratio_g)};
}

Outcome criterion8(const ToyRuns& t) {
  bool pass = true;
  std::string detail;
  for (Region r : kBodyRegions) {
    const double g = t.joint_eval.region_bias.at("GPCN").at(r);
    const double b = t.joint_eval.region_bias.at("NASC").at(r);
    pass = pass && g < b;
    detail += (detail.empty() ? "" : ", ") + region_name(r) + " " + fmt(b) + "% -> " + fmt(g) + "%";
  }
  return {pass, detail};
}

// ---------------------------------------------------------------------------

int run_cli(const Options& o, const std::string& args) {
  const std::string cmd = "\"" + o.cli.string() + "\" " + args + " >/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome criterion11(const RunConfig& toy, const Options& o) {
  // Full dataset regenerated in place.
  const fs::path first = o.work / "data.first";
  fs::remove_all(first);
  fs::rename(toy.data_root, first);
  ensure_dataset(toy);
  const auto data_diff = testing::snapshot_diff(testing::snapshot(first), testing::snapshot(toy.data_root));
  fs::remove_all(first);

  // Command-line pipeline run twice from the same config and seed.
  RunConfig c = toy;
  c.data.families = {"siemens_fdg", "sinounion_mfbg"};
  c.data.count_per_family = 10;
  c.data_root = o.work / "determinism/run/data";
  c.train.iterations = 30;
  c.train.log_interval = 5;
  c.train.checkpoint_interval = 10;
  c.eval.families.clear();
  const fs::path cfg = o.work / "determinism/config.ini";
  fs::create_directories(cfg.parent_path());
  io::write_file_atomic(cfg, format_run_config(c));
  const fs::path run = o.work / "determinism/run";
  const std::string conf = "--config \"" + cfg.string() + "\" --seed 7 ";
  auto once = [&]() {
    fs::remove_all(run);
    const fs::path ckpt = run / "train/checkpoints/final";
    int rc = 0;
    rc |= run_cli(o, "gen-data " + conf + "--out \"" + (run / "data").string() + "\"");
    rc |= run_cli(o, "train " + conf + "--out \"" + (run / "train").string() + "\"");
    rc |= run_cli(o, "eval " + conf + "--out \"" + (run / "eval").string() + "\" --checkpoint \"" + ckpt.string() + "\"");
    rc |= run_cli(o, "plot-data " + conf + "--out \"" + (run / "plot").string() + "\" --checkpoint \"" +
                         ckpt.string() + "\"");
    if (rc != 0) throw std::runtime_error("a pipeline command failed");
    return testing::snapshot(run);
  };
  const auto a = once();
  const auto b = once();
  const auto cli_diff = testing::snapshot_diff(a, b);
  std::size_t ckpts = 0, csvs = 0;
  for (const auto& [k, v] : a) {
    ckpts += k.find("checkpoints/") != std::string::npos;
    csvs += k.ends_with(".csv");
  }
  std::string detail = "dataset regeneration: " + std::to_string(data_diff.size()) + " differing files; CLI pipeline (" +
                       std::to_string(a.size()) + " files, " + std::to_string(ckpts) + " checkpoint files, " +
                       std::to_string(csvs) + " CSVs): " + std::to_string(cli_diff.size()) + " differing files";
  for (const auto& d : data_diff) detail += " " + d;
  for (const auto& d : cli_diff) detail += " " + d;
  return {data_diff.empty() && cli_diff.empty() && ckpts > 0 && csvs > 0, detail};
}

}  // namespace

int main(int argc, char** argv) {
  configure_allocator();
  CLI::App app{"GPCN acceptance suite"};
  Options o;
#ifdef GPCN_CLI_PATH
  o.cli = GPCN_CLI_PATH;
#endif
#ifdef GPCN_SOURCE_DIR
  o.source_dir = GPCN_SOURCE_DIR;
#endif
  app.add_option("--work", o.work, "Scratch directory for datasets and runs");
  app.add_option("--iterations", o.iterations, "Training iterations per toy run")->check(CLI::Range(1, 10000));
  app.add_option("--cli", o.cli, "Path to the gpcn executable");
  app.add_option("--source-dir", o.source_dir, "Repository root (for the example dose tables)");
  app.add_option("--only", o.only, "Run only these criteria")->delimiter(',')->check(CLI::Range(1, 11));
  CLI11_PARSE(app, argc, argv);
  o.work = fs::absolute(o.work);
  fs::create_directories(o.work);

  const RunConfig toy = toy_config(o);
  auto wanted = [&](int n) { return o.only.empty() || std::find(o.only.begin(), o.only.end(), n) != o.only.end(); };
  std::map<int, Outcome> results;
  auto attempt = [&](int n, const std::function<Outcome()>& f) {
    if (!wanted(n)) return;
    const auto t0 = Clock::now();
    std::cerr << "== criterion " << n << '\n';
    try {
      results[n] = f();
    } catch (const std::exception& e) {
      results[n] = {false, std::string("exception: ") + e.what()};
    }
    results[n].detail += " [" + fmt(seconds_since(t0), 4) + " s]";
    std::cerr << "criterion " << n << ": " << (results[n].pass ? "PASS" : "FAIL") << ' ' << results[n].detail
              << std::endl;
  };

  const bool needs_data = std::any_of(o.only.begin(), o.only.end(), [](int n) { return n >= 3 && n != 9 && n != 10; });
  if (o.only.empty() || needs_data) {
    std::cerr << "generating dataset under " << toy.data_root << '\n';
    ensure_dataset(toy);
  }

  attempt(1, [] { return criterion1(); });
  attempt(2, [] { return criterion2(); });
  attempt(3, [&] { return criterion3(toy, o); });
  attempt(9, [] { return criterion9(); });
  attempt(10, [&] { return criterion10(toy, o); });

  if (wanted(4) || wanted(5) || wanted(7) || wanted(8)) {
    std::optional<ToyRuns> runs;
    std::string error;
    try {
      runs = train_toy(toy, o);
    } catch (const std::exception& e) {
      error = e.what();
    }
    auto with_runs = [&](const std::function<Outcome(const ToyRuns&)>& f) {
      return [&, f] {
        if (!runs) return Outcome{false, "toy training failed: " + error};
        return f(*runs);
      };
    };
    attempt(4, with_runs([&](const ToyRuns& t) { return criterion4(toy, t); }));
    attempt(5, with_runs(criterion5));
    attempt(7, with_runs(criterion7));
    attempt(8, with_runs(criterion8));
  }
  attempt(6, [&] { return criterion6(toy, o); });
  attempt(11, [&] { return criterion11(toy, o); });

  const std::map<int, const char*> titles = {
      {1, "transform exactness"},  {2, "gradient suite"},      {3, "identity at init"},
      {4, "toy joint training"},   {5, "ablation ordering"},   {6, "single-domain generalization"},
      {7, "depth-error flattening"}, {8, "region-bias reduction"}, {9, "metric oracles"},
      {10, "dose calculator"},     {11, "determinism"}};
  bool all = true;
  for (const auto& [n, r] : results) {
    std::cout << "criterion " << n << " (" << titles.at(n) << "): " << (r.pass ? "PASS" : "FAIL") << " - "
              << r.detail << '\n';
    all = all && r.pass;
  }
  return all ? 0 : 1;
}
