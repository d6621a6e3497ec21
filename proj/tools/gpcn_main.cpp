// SPDX-License-Identifier: Apache-2.0
//
// gpcn <subcommand> [--config FILE] [--out DIR] [--seed N] [--mode joint|single]
//
// Exit status: 0 success, 2 invalid input or configuration, 1 runtime failure.
#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "gpcn/pipeline.hpp"
#include "gpcn/tensor_io.hpp"

namespace {

namespace fs = std::filesystem;

struct CommonArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string mode;
  std::string checkpoint;
};

gpcn::RunConfig resolve(const CommonArgs& a) {
  gpcn::RunConfig c = a.config.empty() ? gpcn::RunConfig{} : gpcn::load_run_config(a.config);
  if (a.seed) c.apply_seed(*a.seed);
  if (!a.mode.empty()) c.train.mode = a.mode;
  if (!a.checkpoint.empty()) c.eval.checkpoint = fs::absolute(a.checkpoint);
  c.validate();
  return c;
}

void add_common(CLI::App* cmd, CommonArgs& a, bool with_mode, bool with_checkpoint) {
  cmd->add_option("--config", a.config, "Run configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--out", a.out, "Output directory")->required();
  cmd->add_option("--seed", a.seed, "Base seed for data, model and batch sampling");
  if (with_mode) cmd->add_option("--mode", a.mode, "Training mode")->check(CLI::IsMember({"joint", "single"}));
  if (with_checkpoint) cmd->add_option("--checkpoint", a.checkpoint, "Checkpoint directory to evaluate");
}

void print_summary(const gpcn::EvalResult& r) {
  std::cout << "family,method,psnr,ssim,nmae,nmse\n";
  for (const auto& [family, methods] : r.summary) {
    for (const auto& [method, m] : methods) {
      std::cout << family << ',' << method << ',' << m.psnr << ',' << m.ssim << ',' << m.nmae << ',' << m.nmse << '\n';
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  gpcn::configure_allocator();
  CLI::App app{"Dual-domain PET correction network: data generation, training, evaluation"};
  app.require_subcommand(1);
  CommonArgs args;

  auto* gen = app.add_subcommand("gen-data", "Generate the phantom dataset into --out");
  add_common(gen, args, false, false);
  auto* train = app.add_subcommand("train", "Train a model; writes checkpoints and train_log.csv");
  add_common(train, args, true, false);
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint and write the metrics CSV bundle");
  add_common(eval, args, false, true);
  auto* ablate = app.add_subcommand("ablate", "Train and compare the full model with each branch removed");
  add_common(ablate, args, false, false);
  auto* dose = app.add_subcommand("dose", "Compute DLP and effective dose from an exam table");
  add_common(dose, args, false, false);
  auto* plot = app.add_subcommand("plot-data", "Export figure data: depth profile, region bias, histograms, spectra");
  add_common(plot, args, false, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const gpcn::RunConfig config = resolve(args);
    const fs::path out = fs::absolute(args.out);
    if (*gen) {
      gpcn::RunConfig c = config;
      c.data_root = out;
      const auto entries = gpcn::run_gen_data(c, out);
      std::cout << "wrote " << entries.size() << " samples to " << out.string() << '\n';
    } else if (*train) {
      const auto r = gpcn::run_train(config, out, &std::cout);
      std::cout << "final checkpoint: " << r.final_checkpoint.string() << '\n'
                << "batch digest: " << r.batch_digest << '\n';
    } else if (*eval) {
      const auto r = gpcn::run_eval(config, gpcn::load_eval_model(config), out);
      print_summary(r);
    } else if (*ablate) {
      const auto r = gpcn::run_ablate(config, out, &std::cout);
      std::cout << "method,PSNR,SSIM,nMAE,NMSE\n";
      for (const auto& [name, m] : r.table) {
        std::cout << name << ',' << m.psnr << ',' << m.ssim << ',' << m.nmae << ',' << m.nmse << '\n';
      }
    } else if (*dose) {
      gpcn::run_dose(config, out);
      std::cout << "wrote dose_records.csv and dose_summary.csv to " << out.string() << '\n';
    } else if (*plot) {
      gpcn::run_plot_data(config, out);
      std::cout << "wrote figure data to " << out.string() << '\n';
    }
  } catch (const gpcn::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
