// SPDX-License-Identifier: Apache-2.0
#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "dir_snapshot.hpp"
#include "gpcn/fasd.hpp"
#include "gpcn/pipeline.hpp"
#include "test_util.hpp"

namespace gpcn {
namespace {

namespace fs = std::filesystem;
using testing::snapshot;
using testing::snapshot_diff;
using testing::TempDir;

RunConfig tiny_run(const fs::path& root) {
  RunConfig c;
  c.model.stages = 1;
  c.model.channels = 4;
  c.model.state_dim = 4;
  c.model.fasd_hidden = 4;
  c.data.families = {"siemens_fdg", "sinounion_mfbg"};
  c.data.count_per_family = 10;
  c.data.height = 32;
  c.data.width = 32;
  c.data_root = root;
  c.train.iterations = 4;
  c.train.log_interval = 1;
  c.train.checkpoint_interval = 2;
  c.train.ablation_seeds = {0};
  return c;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

std::vector<std::string> cells(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  for (std::string c; std::getline(is, c, ',');) out.push_back(c);
  return out;
}

class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("pipeline");
    run_gen_data(tiny_run(data()), data());
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static fs::path data() { return *dir_ / "data"; }
  static fs::path scratch(const std::string& name) { return *dir_ / name; }
  static RunConfig config() { return tiny_run(data()); }

  static TempDir* dir_;
};

TempDir* Pipeline::dir_ = nullptr;

TEST_F(Pipeline, GenDataIdempotentAndCreatesDirectories) {
  const fs::path nested = scratch("gen/a/b/c");
  ASSERT_FALSE(fs::exists(nested));
  run_gen_data(config(), nested);
  const auto first = snapshot(nested);
  EXPECT_TRUE(first.contains("manifest.tsv"));
  EXPECT_TRUE(first.contains("resolved_config.ini"));
  run_gen_data(config(), nested);
  EXPECT_TRUE(snapshot_diff(first, snapshot(nested)).empty());
  // Same seed into a different directory: sample bytes and manifest match.
  EXPECT_TRUE(snapshot_diff(first, snapshot(data()), "resolved_config.ini").empty());
}

TEST_F(Pipeline, TrainingFamiliesByMode) {
  RunConfig c = config();
  EXPECT_EQ(training_families(c), c.data.families);
  c.train.mode = "single";
  EXPECT_EQ(training_families(c), std::vector<std::string>{"siemens_fdg"});
}

TEST_F(Pipeline, ZeroIterationsSavesInitialization) {
  RunConfig c = config();
  c.train.iterations = 0;
  const auto r = run_train(c, scratch("train0"));
  const auto loaded = load_checkpoint(r.final_checkpoint, c.model).params.named_parameters();
  const auto init = GpcnParams::init(c.model).named_parameters();
  ASSERT_EQ(loaded.size(), init.size());
  for (std::size_t i = 0; i < init.size(); ++i) {
    EXPECT_EQ(loaded[i].first, init[i].first);
    EXPECT_TRUE(testing::bitwise_equal(loaded[i].second, init[i].second)) << init[i].first;
  }
  EXPECT_TRUE(fs::exists(r.best_checkpoint));
  EXPECT_TRUE(fs::exists(scratch("train0/train_log.csv")));
  EXPECT_TRUE(fs::exists(scratch("train0/resolved_config.ini")));
}

TEST_F(Pipeline, TrainLogsEveryInterval) {
  RunConfig c = config();
  c.train.log_interval = 2;
  const auto r = run_train(c, scratch("trainlog"));
  const auto rows = lines_of(io::read_file(scratch("trainlog/train_log.csv")));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], "iteration,l_img,l_freq,l_total");
  EXPECT_EQ(cells(rows[1])[0], "2");
  EXPECT_EQ(cells(rows[2])[0], "4");
  ASSERT_EQ(r.log.size(), 2u);
  EXPECT_DOUBLE_EQ(r.log[0].loss.l_total, r.log[0].loss.l_img + c.model.lambda_freq * r.log[0].loss.l_freq);
  EXPECT_TRUE(fs::exists(scratch("trainlog/checkpoints/last")));
}

TEST_F(Pipeline, ResumeMatchesUninterruptedRun) {
  RunConfig c = config();
  c.train.iterations = 6;
  const auto full = run_train(c, scratch("resume_full"));

  RunConfig first = c;
  first.train.iterations = 3;
  const auto part = run_train(first, scratch("resume_part"));
  RunConfig second = c;
  second.train.resume = part.final_checkpoint;
  const auto rest = run_train(second, scratch("resume_part"));
  EXPECT_EQ(rest.start_iteration, 3);
  EXPECT_EQ(rest.batch_digest, full.batch_digest);
  EXPECT_EQ(io::read_file(scratch("resume_part/train_log.csv")), io::read_file(scratch("resume_full/train_log.csv")));
  EXPECT_TRUE(snapshot_diff(snapshot(full.final_checkpoint), snapshot(rest.final_checkpoint)).empty());
}

TEST_F(Pipeline, ResumeWithoutOptimizerStateRejected) {
  RunConfig c = config();
  const fs::path bare = scratch("bare_ckpt");
  save_checkpoint(bare, GpcnParams::init(c.model));
  c.train.resume = bare;
  EXPECT_THROW(run_train(c, scratch("bare_out")), ValidationError);
}

TEST_F(Pipeline, GeometryMismatchRejected) {
  RunConfig c = config();
  c.data.height = 64;
  c.data.width = 64;
  EXPECT_THROW(run_train(c, scratch("geom")), ValidationError);
  EXPECT_THROW(run_eval(c, GpcnParams::init(c.model), {}), ValidationError);
}

TEST_F(Pipeline, MissingFamilyRejected) {
  RunConfig c = config();
  c.data.families = {"siemens_fdg", "siemens_fapi"};
  EXPECT_THROW(run_train(c, scratch("missing")), ValidationError);
}

void expect_same_row(const MethodSummary& a, const MethodSummary& b) {
  EXPECT_EQ(a.psnr, b.psnr);
  EXPECT_EQ(a.ssim, b.ssim);
  EXPECT_EQ(a.nmae, b.nmae);
  EXPECT_EQ(a.nmse, b.nmse);
  EXPECT_EQ(a.samples, b.samples);
}

TEST_F(Pipeline, IdentityModelEvalEqualsNascRow) {
  const RunConfig c = config();
  const auto r = run_eval(c, load_eval_model(c), scratch("eval_identity"));
  ASSERT_EQ(r.summary.size(), 3u);  // two families and ALL
  for (const auto& [family, methods] : r.summary) {
    SCOPED_TRACE(family);
    expect_same_row(methods.at("GPCN"), methods.at("NASC"));
  }
  EXPECT_EQ(r.depth_quartiles.at("GPCN"), r.depth_quartiles.at("NASC"));
}

TEST_F(Pipeline, TrainZeroThenEvalEqualsNasc) {
  RunConfig c = config();
  c.train.iterations = 0;
  c.eval.checkpoint = run_train(c, scratch("zero_then_eval")).final_checkpoint;
  const auto r = run_eval(c, load_eval_model(c), {});
  expect_same_row(r.summary.at("ALL").at("GPCN"), r.summary.at("ALL").at("NASC"));
}

TEST_F(Pipeline, EvalCoversExactlyTheTestSplit) {
  const RunConfig c = config();
  run_eval(c, load_eval_model(c), scratch("eval_cover"));
  std::set<std::pair<std::string, std::string>> seen;
  const auto rows = lines_of(io::read_file(scratch("eval_cover/report.csv")));
  ASSERT_EQ(rows.front(), "family,index,method,metric,value");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto c = cells(rows[i]);
    seen.emplace(c[0], c[1]);
  }
  std::set<std::pair<std::string, std::string>> expected;
  for (const auto& e : select(read_manifest(data()), "test")) expected.emplace(e.family, std::to_string(e.index));
  EXPECT_EQ(seen, expected);
  EXPECT_EQ(rows.size(), 1 + expected.size() * 2 * 4);
}

TEST_F(Pipeline, EvalRerunIsBitIdentical) {
  RunConfig c = config();
  c.eval.checkpoint = run_train(c, scratch("eval_rerun_train")).final_checkpoint;
  const auto params = load_eval_model(c);
  const auto r = run_eval(c, params, scratch("eval_rerun"));
  const auto first = snapshot(scratch("eval_rerun"));
  run_eval(c, params, scratch("eval_rerun"));
  EXPECT_TRUE(snapshot_diff(first, snapshot(scratch("eval_rerun"))).empty());
  for (const std::string name : {"report.csv", "summary.csv", "depth_profile.csv", "region_bias.csv",
                                 "joint_hist.csv", "joint_stats.csv", "lesions.csv"}) {
    EXPECT_TRUE(first.contains(name)) << name;
  }
  EXPECT_EQ(r.files.size(), 7u);
}

TEST_F(Pipeline, MetricTogglesAndFamilyFilter) {
  RunConfig c = config();
  c.eval.ssim = false;
  c.eval.lesions = false;
  c.eval.families = {"sinounion_mfbg"};
  const auto r = run_eval(c, load_eval_model(c), scratch("eval_toggle"));
  EXPECT_FALSE(fs::exists(scratch("eval_toggle/lesions.csv")));
  EXPECT_TRUE(r.summary.contains("sinounion_mfbg"));
  EXPECT_FALSE(r.summary.contains("siemens_fdg"));
  const std::string summary = io::read_file(scratch("eval_toggle/summary.csv"));
  EXPECT_EQ(summary.find(",ssim,"), std::string::npos);
  EXPECT_NE(summary.find(",psnr,"), std::string::npos);
}

TEST_F(Pipeline, AblationTableShapeAndSharedBatches) {
  RunConfig c = config();
  c.train.iterations = 2;
  const auto r = run_ablate(c, scratch("ablate"));
  const auto rows = lines_of(io::read_file(scratch("ablate/ablation.csv")));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], "method,PSNR,SSIM,nMAE,NMSE");
  EXPECT_EQ(cells(rows[1])[0], "w/o MBCR");
  EXPECT_EQ(cells(rows[2])[0], "w/o FASD");
  EXPECT_EQ(cells(rows[3])[0], "GPCN");
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(cells(rows[i]).size(), 5u);
  ASSERT_EQ(r.runs.size(), 3u);
  EXPECT_EQ(r.runs[0].batch_digest, r.runs[1].batch_digest);
  EXPECT_EQ(r.runs[1].batch_digest, r.runs[2].batch_digest);
  // Each variant owns its directory.
  for (const char* v : {"w_o_MBCR", "w_o_FASD", "GPCN"}) {
    EXPECT_TRUE(fs::exists(scratch("ablate/seed_0") / v / "checkpoints/final")) << v;
    EXPECT_TRUE(fs::exists(scratch("ablate/seed_0") / v / "eval/summary.csv")) << v;
  }
  EXPECT_EQ(lines_of(io::read_file(scratch("ablate/ablation_runs.csv"))).size(), 4u);
}

TEST_F(Pipeline, PlotDataHeadersAndDepthEdges) {
  const RunConfig c = config();
  run_plot_data(c, scratch("plot"));
  const std::pair<const char*, const char*> headers[] = {
      {"depth_profile.csv", "method,bin,depth_lo,depth_hi,mean_abs_rel_error,variance,count"},
      {"region_bias.csv", "method,region,mean_abs_rel_bias_percent,samples"},
      {"joint_hist.csv", "method,ref_bin,pred_bin,ref_lo,ref_hi,pred_lo,pred_hi,count"},
      {"joint_stats.csv", "method,pearson_r,rmse,pixels,quartile1,quartile2,quartile3,quartile4"},
      {"spectrum.csv", "family,index,image,row,col,log_amplitude,phase"}};
  for (const auto& [file, header] : headers) {
    const auto rows = lines_of(io::read_file(scratch("plot") / file));
    ASSERT_GT(rows.size(), 1u) << file;
    EXPECT_EQ(rows[0], header);
    const std::size_t n = cells(rows[0]).size();
    for (std::size_t i = 1; i < rows.size(); ++i) ASSERT_EQ(cells(rows[i]).size(), n) << file << " row " << i;
  }
  EXPECT_FALSE(fs::exists(scratch("plot/report.csv")));

  double max_depth = 0.0;
  for (const auto& e : select(read_manifest(data()), "test")) {
    const Tensor depth = load_sample(data(), e).depth;
    for (double d : depth.data()) max_depth = std::max(max_depth, d);
  }
  const auto rows = lines_of(io::read_file(scratch("plot/depth_profile.csv")));
  EXPECT_EQ(std::stod(cells(rows[1])[2]), 0.0);
  EXPECT_EQ(std::stod(cells(rows[c.eval.depth_bins])[3]), max_depth);

  const auto spectrum = lines_of(io::read_file(scratch("plot/spectrum.csv")));
  EXPECT_EQ(spectrum.size(), 1 + 2u * 3u * 32u * 32u);  // one sample per family, three images
}

TEST(PlotData, ConstantImageSpectrumHasOneDominantBin) {
  const Tensor img = Tensor::full({1, 32, 32}, 0.75);
  const LogSpectrum s = log_spectrum_export(img);
  const auto a = s.log_amplitude.data();
  const auto peak = std::max_element(a.begin(), a.end()) - a.begin();
  EXPECT_EQ(peak, 16 * 32 + 16);
  EXPECT_NEAR(a[static_cast<std::size_t>(peak)], std::log1p(0.75 * 1024), 1e-12);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (static_cast<std::ptrdiff_t>(i) != peak) EXPECT_LT(a[i], 1e-12) << i;
  }
}

TEST_F(Pipeline, DoseRun) {
  const fs::path in = scratch("dose_in");
  fs::create_directories(in);
  io::write_file_atomic(in / "k.tsv", "# non-authoritative example\nage_band\tk_factor\nadult\t0.015\nchild\t0.02\n");
  io::write_file_atomic(in / "exams.tsv", "ctdi_vol\tscan_length\tage_band\n10\t50\tadult\n4\t30\tchild\n");
  RunConfig c = config();
  c.dose.exams = in / "exams.tsv";
  c.dose.k_table = in / "k.tsv";
  run_dose(c, scratch("dose_out"));
  const auto rows = lines_of(io::read_file(scratch("dose_out/dose_records.csv")));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_NE(io::read_file(scratch("dose_out/dose_summary.csv")).find("non-authoritative example"), std::string::npos);

  c.dose.k_table = in / "absent.tsv";
  EXPECT_THROW(run_dose(c, scratch("dose_out")), ValidationError);
  c.dose.k_table.clear();
  EXPECT_THROW(run_dose(c, scratch("dose_out")), ValidationError);
}

// Command-line surface: exit codes and messages.
class Cli : public Pipeline {
 protected:
  static int run(const std::string& args, std::string* err = nullptr) {
    const fs::path err_file = scratch("cli_stderr.txt");
    const std::string cmd = std::string("\"") + GPCN_CLI_PATH + "\" " + args + " >/dev/null 2>\"" +
                            err_file.string() + "\"";
    const int status = std::system(cmd.c_str());
    if (err) *err = io::read_file(err_file);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  static fs::path write_config(const std::string& name, const std::string& text) {
    const fs::path p = scratch(name);
    io::write_file_atomic(p, text);
    return p;
  }
  static fs::path tiny_config_file() {
    RunConfig c = config();
    c.train.iterations = 1;
    return write_config("cli_tiny.ini", format_run_config(c));
  }
};

TEST_F(Cli, HelpSucceeds) { EXPECT_EQ(run("--help"), 0); }

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("train"), 2);  // --out is required
  EXPECT_EQ(run("train --out x --mode both"), 2);
  EXPECT_EQ(run("train --out x --seed minus-one"), 2);
  EXPECT_EQ(run("train --config /nonexistent.ini --out x"), 2);
}

TEST_F(Cli, MalformedConfigExitsTwoWithLineNumber) {
  const fs::path cfg = write_config("cli_bad.ini", "[model]\nchannels = 4\nstages: 2\n");
  std::string err;
  EXPECT_EQ(run("gen-data --config \"" + cfg.string() + "\" --out \"" + scratch("cli_bad_out").string() + "\"", &err),
            2);
  EXPECT_THAT(err, ::testing::HasSubstr("cli_bad.ini:3:"));
}

TEST_F(Cli, MissingDatasetExitsTwo) {
  const fs::path cfg = write_config("cli_nodata.ini", "[data]\nroot = no_such_dataset\n");
  EXPECT_EQ(run("train --config \"" + cfg.string() + "\" --out \"" + scratch("cli_nodata_out").string() + "\""), 2);
}

TEST_F(Cli, RuntimeFailureExitsOne) {
  // The output path runs through a regular file, so directory creation fails.
  io::write_file_atomic(scratch("cli_blocker"), "x");
  EXPECT_EQ(run("gen-data --config \"" + tiny_config_file().string() + "\" --out \"" +
                scratch("cli_blocker/sub").string() + "\""),
            1);
}

TEST_F(Cli, CorruptCheckpointExitsOne) {
  RunConfig c = config();
  const fs::path ckpt = scratch("cli_corrupt_ckpt");
  save_checkpoint(ckpt, GpcnParams::init(c.model));
  std::string blob = io::read_file(ckpt / "tensors.gpcn");
  blob[blob.size() / 2] ^= 0x5a;
  io::write_file_atomic(ckpt / "tensors.gpcn", blob);
  EXPECT_EQ(run("eval --config \"" + tiny_config_file().string() + "\" --out \"" + scratch("cli_corrupt_out").string() +
                "\" --checkpoint \"" + ckpt.string() + "\""),
            1);
}

TEST_F(Cli, EndToEndSucceeds) {
  const std::string cfg = "--config \"" + tiny_config_file().string() + "\"";
  const fs::path out = scratch("cli_e2e/train");
  EXPECT_EQ(run("train " + cfg + " --out \"" + out.string() + "\" --mode single --seed 3"), 0);
  const RunConfig resolved = load_run_config(out / "resolved_config.ini");
  EXPECT_EQ(resolved.train.mode, "single");
  EXPECT_EQ(resolved.train.seed, 3u);
  EXPECT_EQ(resolved.model.seed, 3u);
  EXPECT_EQ(run("eval " + cfg + " --out \"" + scratch("cli_e2e/eval").string() + "\" --checkpoint \"" +
                (out / "checkpoints/final").string() + "\""),
            0);
  EXPECT_TRUE(fs::exists(scratch("cli_e2e/eval/summary.csv")));
}

}  // namespace
}  // namespace gpcn
