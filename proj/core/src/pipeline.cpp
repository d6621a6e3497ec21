// SPDX-License-Identifier: Apache-2.0
#include "gpcn/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "gpcn/dose.hpp"
#include "gpcn/fasd.hpp"
#include "gpcn/tensor_io.hpp"

namespace gpcn {

namespace {

namespace fs = std::filesystem;

constexpr const char* kNasc = "NASC";
constexpr const char* kGpcn = "GPCN";

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  io::write_file_atomic(path, text);
}

Tensor as_batch(const std::vector<const Tensor*>& images) {
  const Shape& s = images.front()->shape();
  std::vector<double> data;
  data.reserve(images.size() * static_cast<std::size_t>(numel(s)));
  for (const Tensor* t : images) data.insert(data.end(), t->data().begin(), t->data().end());
  return Tensor::from_data({static_cast<std::int64_t>(images.size()), 1, s[s.size() - 2], s.back()}, std::move(data));
}

Tensor forward_one(const GpcnParams& params, const Tensor& nasc) {
  NoGradGuard guard;
  return gpcn_forward(as_batch({&nasc}), params);
}

void check_geometry(const RunConfig& config, const PhantomSample& s) {
  if (s.asc.dim(1) != config.data.height || s.asc.dim(2) != config.data.width) {
    throw ValidationError("dataset samples are " + std::to_string(s.asc.dim(1)) + "x" + std::to_string(s.asc.dim(2)) +
                          " but the config expects " + std::to_string(config.data.height) + "x" +
                          std::to_string(config.data.width));
  }
}

std::vector<std::string> existing_families(const std::vector<ManifestEntry>& manifest) {
  std::vector<std::string> out;
  for (const auto& e : manifest) {
    if (std::find(out.begin(), out.end(), e.family) == out.end()) out.push_back(e.family);
  }
  return out;
}

std::string ckpt_name(const char* which) { return std::string("checkpoints/") + which; }

}  // namespace

void write_resolved_config(const fs::path& dir, const RunConfig& config) {
  write_text(dir / "resolved_config.ini", format_run_config(config));
}

std::vector<ManifestEntry> run_gen_data(const RunConfig& config, const fs::path& root) {
  config.validate();
  fs::create_directories(root);
  auto entries = make_dataset(root, config.data);
  write_resolved_config(root, config);
  return entries;
}

std::vector<std::string> training_families(const RunConfig& config) {
  if (config.train.mode == "single") return {config.train.single_family};
  return config.data.families;
}

TrainResult run_train(const RunConfig& config, const fs::path& out, std::ostream* progress) {
  config.validate();
  const auto manifest = read_manifest(config.data_root);
  const auto families = training_families(config);
  const auto present = existing_families(manifest);
  for (const auto& f : families) {
    if (std::find(present.begin(), present.end(), f) == present.end()) {
      throw ValidationError("family '" + f + "' is not in the dataset at " + config.data_root.string());
    }
  }
  const auto entries = select(manifest, "train", families);
  if (entries.empty()) throw ValidationError("no training samples for the selected families");
  std::vector<PhantomSample> samples;
  samples.reserve(entries.size());
  for (const auto& e : entries) {
    samples.push_back(load_sample(config.data_root, e));
    check_geometry(config, samples.back());
  }

  GpcnParams params;
  AdamState adam;
  std::int64_t start = 0;
  if (!config.train.resume.empty()) {
    LoadedCheckpoint ck = load_checkpoint(config.train.resume, config.model);
    if (!ck.adam) throw ValidationError("resume checkpoint has no optimizer state: " + config.train.resume.string());
    params = std::move(ck.params);
    adam = std::move(*ck.adam);
    start = adam.step;
  } else {
    params = GpcnParams::init(config.model);
    adam = AdamState::for_params(params.parameters());
  }
  adam.options.lr = config.train.lr;
  if (start > config.train.iterations) {
    throw ValidationError("resume checkpoint is at iteration " + std::to_string(start) + ", beyond train.iterations");
  }

  fs::create_directories(out);
  write_resolved_config(out, config);

  // The batch stream depends only on the sampling seed and the sample count,
  // so model variants trained on the same data see identical batches.
  Rng sampler(derive_seed(config.train.seed, 0x5a17));
  std::string digest_bytes;
  auto draw_batch = [&]() {
    std::vector<std::size_t> idx(static_cast<std::size_t>(config.train.batch_size));
    for (auto& i : idx) {
      i = static_cast<std::size_t>(sampler.below(samples.size()));
      digest_bytes += std::to_string(i) + ",";
    }
    return idx;
  };
  for (std::int64_t it = 0; it < start; ++it) draw_batch();

  TrainResult result;
  result.start_iteration = start;
  std::ostringstream log;
  const fs::path log_path = out / "train_log.csv";
  if (start > 0 && fs::exists(log_path)) {
    // Keep rows up to the resume point.
    std::istringstream old(io::read_file(log_path));
    std::string line;
    std::getline(old, line);
    log << line << '\n';
    while (std::getline(old, line)) {
      if (std::stoll(line.substr(0, line.find(','))) <= start) log << line << '\n';
    }
  } else {
    log << "iteration,l_img,l_freq,l_total\n";
  }

  double window = 0.0;
  std::int64_t window_count = 0;
  result.best_window_loss = std::numeric_limits<double>::infinity();
  result.final_checkpoint = out / ckpt_name("final");
  result.best_checkpoint = out / ckpt_name("best");
  if (config.train.iterations == 0 || start == config.train.iterations) {
    save_checkpoint(result.best_checkpoint, params, &adam);
  }
  for (std::int64_t it = start + 1; it <= config.train.iterations; ++it) {
    const auto idx = draw_batch();
    std::vector<const Tensor*> xs, ys;
    for (auto i : idx) {
      xs.push_back(&samples[i].nasc);
      ys.push_back(&samples[i].asc);
    }
    const LossBreakdown l = train_step(as_batch(xs), as_batch(ys), params, adam);
    window += l.l_total;
    ++window_count;
    if (it % config.train.log_interval == 0 || it == config.train.iterations) {
      result.log.push_back({it, l});
      log << it << ',' << num(l.l_img) << ',' << num(l.l_freq) << ',' << num(l.l_total) << '\n';
      const double mean = window / static_cast<double>(window_count);
      if (mean < result.best_window_loss) {
        result.best_window_loss = mean;
        save_checkpoint(result.best_checkpoint, params, &adam);
      }
      window = 0.0;
      window_count = 0;
      if (progress) {
        *progress << "iter " << it << "/" << config.train.iterations << " l_img " << l.l_img << " l_freq "
                  << l.l_freq << " l_total " << l.l_total << '\n';
      }
    }
    if (it % config.train.checkpoint_interval == 0) {
      save_checkpoint(out / ckpt_name("last"), params, &adam);
      write_text(log_path, log.str());
    }
  }
  save_checkpoint(result.final_checkpoint, params, &adam);
  write_text(log_path, log.str());
  result.batch_digest = io::checksum_hex(io::adler32(digest_bytes));
  write_text(out / "seed_audit.tsv", "train_seed\tsamples\tbatch_size\titerations\tbatch_digest\n" +
                                         std::to_string(config.train.seed) + '\t' + std::to_string(samples.size()) +
                                         '\t' + std::to_string(config.train.batch_size) + '\t' +
                                         std::to_string(config.train.iterations) + '\t' + result.batch_digest + '\n');
  return result;
}

GpcnParams load_eval_model(const RunConfig& config) {
  if (config.eval.checkpoint.empty()) return GpcnParams::init(config.model);
  return load_checkpoint(config.eval.checkpoint, config.model).params;
}

EvalResult run_eval(const RunConfig& config, const GpcnParams& params, const fs::path& out) {
  config.validate();
  const auto manifest = read_manifest(config.data_root);
  const auto entries = select(manifest, config.eval.split, config.eval.families);
  if (entries.empty()) throw ValidationError("no samples in split '" + config.eval.split + "'");
  const EvalConfig& ec = config.eval;

  struct Acc {
    std::vector<double> psnr, ssim, nmae, nmse;
  };
  std::map<std::string, std::map<std::string, Acc>> acc;  // family -> method
  std::map<std::string, metrics::DepthErrorSamples> depth;
  std::map<std::string, std::map<Region, std::vector<double>>> bias;
  std::map<std::string, std::vector<double>> pooled_pred;
  std::vector<double> pooled_ref, pooled_mask;

  std::ostringstream report, lesions;
  report << "family,index,method,metric,value\n";
  lesions << "family,index,lesion,method,suv_max,suv_mean,volume,tlg,glcm_contrast,glcm_homogeneity\n";

  for (const auto& e : entries) {
    const PhantomSample s = load_sample(config.data_root, e);
    check_geometry(config, s);
    const Tensor pred = forward_one(params, s.nasc);
    const std::int64_t h = s.asc.dim(1), w = s.asc.dim(2);
    const auto ref = s.asc.data();
    const Tensor body = s.body_mask();
    const std::pair<const char*, std::span<const double>> methods[] = {{kNasc, s.nasc.data()}, {kGpcn, pred.data()}};
    for (const auto& [name, img] : methods) {
      auto& a = acc[e.family][name];
      auto row = [&](const char* metric, double v) {
        report << e.family << ',' << e.index << ',' << name << ',' << metric << ',' << num(v) << '\n';
      };
      if (ec.psnr) {
        a.psnr.push_back(metrics::psnr(img, ref));
        row("psnr", a.psnr.back());
      }
      if (ec.ssim) {
        a.ssim.push_back(metrics::ssim(img, ref, h, w));
        row("ssim", a.ssim.back());
      }
      if (ec.nmae) {
        a.nmae.push_back(metrics::nmae(img, ref));
        row("nmae", a.nmae.back());
      }
      if (ec.nmse) {
        a.nmse.push_back(metrics::nmse(img, ref));
        row("nmse", a.nmse.back());
      }
      depth[name].add(img, ref, s.depth.data(), body.data());
      for (const auto& [region, value] : metrics::region_bias(img, ref, s.labels.data())) {
        bias[name][region].push_back(value);
      }
      pooled_pred[name].insert(pooled_pred[name].end(), img.begin(), img.end());
    }
    pooled_ref.insert(pooled_ref.end(), ref.begin(), ref.end());
    pooled_mask.insert(pooled_mask.end(), body.data().begin(), body.data().end());

    if (ec.lesions) {
      for (std::size_t l = 0; l < s.lesions.size(); ++l) {
        const std::pair<const char*, std::span<const double>> all[] = {
            {"ASC", ref}, {kNasc, s.nasc.data()}, {kGpcn, pred.data()}};
        for (const auto& [name, img] : all) {
          const auto v = metrics::voi_stats(img, s.lesions[l].data());
          const auto g = metrics::glcm_features(img, s.lesions[l].data(), h, w, {ec.glcm_levels});
          lesions << e.family << ',' << e.index << ',' << l << ',' << name << ',' << num(v.suv_max) << ','
                  << num(v.suv_mean) << ',' << num(v.volume) << ',' << num(v.tlg) << ',' << num(g.contrast) << ','
                  << num(g.homogeneity) << '\n';
        }
      }
    }
  }

  EvalResult result;
  std::ostringstream summary;
  summary << "family,method,metric,mean,std,count,excluded\n";
  auto summarize = [&](const std::string& family, const std::string& method, const Acc& a) {
    MethodSummary m;
    const std::pair<const char*, const std::vector<double>*> cols[] = {
        {"psnr", &a.psnr}, {"ssim", &a.ssim}, {"nmae", &a.nmae}, {"nmse", &a.nmse}};
    for (const auto& [metric, values] : cols) {
      if (values->empty()) continue;
      const auto s = metrics::summarize(*values);
      summary << family << ',' << method << ',' << metric << ',' << num(s.mean) << ',' << num(s.std) << ','
              << s.count << ',' << s.excluded << '\n';
      m.samples = values->size();
      if (std::string(metric) == "psnr") {
        m.psnr = s.mean;
        m.psnr_excluded = s.excluded;
      } else if (std::string(metric) == "ssim") {
        m.ssim = s.mean;
      } else if (std::string(metric) == "nmae") {
        m.nmae = s.mean;
      } else {
        m.nmse = s.mean;
      }
    }
    result.summary[family][method] = m;
  };
  std::map<std::string, Acc> all;
  for (const auto& f : existing_families(entries)) {
    for (const char* method : {kNasc, kGpcn}) {
      const Acc& a = acc[f][method];
      summarize(f, method, a);
      Acc& t = all[method];
      t.psnr.insert(t.psnr.end(), a.psnr.begin(), a.psnr.end());
      t.ssim.insert(t.ssim.end(), a.ssim.begin(), a.ssim.end());
      t.nmae.insert(t.nmae.end(), a.nmae.begin(), a.nmae.end());
      t.nmse.insert(t.nmse.end(), a.nmse.begin(), a.nmse.end());
    }
  }
  for (const char* method : {kNasc, kGpcn}) summarize("ALL", method, all[method]);

  std::ostringstream depth_csv, bias_csv, hist_csv, stats_csv;
  depth_csv << "method,bin,depth_lo,depth_hi,mean_abs_rel_error,variance,count\n";
  bias_csv << "method,region,mean_abs_rel_bias_percent,samples\n";
  hist_csv << "method,ref_bin,pred_bin,ref_lo,ref_hi,pred_lo,pred_hi,count\n";
  stats_csv << "method,pearson_r,rmse,pixels,quartile1,quartile2,quartile3,quartile4\n";
  for (const char* method : {kNasc, kGpcn}) {
    const auto profile = metrics::bin_depth_errors(depth[method], ec.depth_bins);
    for (std::size_t b = 0; b < profile.mean.size(); ++b) {
      depth_csv << method << ',' << b << ',' << num(profile.edges[b]) << ',' << num(profile.edges[b + 1]) << ','
                << num(profile.mean[b]) << ',' << num(profile.variance[b]) << ',' << profile.count[b] << '\n';
    }
    result.depth_profile[method] = profile;
    result.depth_quartiles[method] = metrics::depth_quartile_errors(depth[method]);
    for (Region r : kBodyRegions) {
      const auto& v = bias[method][r];
      if (v.empty()) continue;
      const double mean = metrics::summarize(v).mean;
      result.region_bias[method][r] = mean;
      bias_csv << method << ',' << region_name(r) << ',' << num(mean) << ',' << v.size() << '\n';
    }
    const auto j = metrics::joint_histogram(pooled_pred[method], pooled_ref, pooled_mask, ec.hist_bins);
    const double step = (j.hi - j.lo) / j.n_bins;
    for (int rb = 0; rb < j.n_bins; ++rb) {
      for (int pb = 0; pb < j.n_bins; ++pb) {
        const double c = j.counts[static_cast<std::size_t>(rb * j.n_bins + pb)];
        if (c == 0.0) continue;
        hist_csv << method << ',' << rb << ',' << pb << ',' << num(j.lo + rb * step) << ','
                 << num(j.lo + (rb + 1) * step) << ',' << num(j.lo + pb * step) << ','
                 << num(j.lo + (pb + 1) * step) << ',' << num(c) << '\n';
      }
    }
    const auto& q = result.depth_quartiles[method];
    stats_csv << method << ',' << num(j.pearson_r) << ',' << num(j.rmse) << ',' << depth[method].depth.size() << ','
              << num(q[0]) << ',' << num(q[1]) << ',' << num(q[2]) << ',' << num(q[3]) << '\n';
    result.joint[method] = j;
  }

  if (!out.empty()) {
    const std::pair<const char*, std::string> files[] = {
        {"report.csv", report.str()},         {"summary.csv", summary.str()},
        {"depth_profile.csv", depth_csv.str()}, {"region_bias.csv", bias_csv.str()},
        {"joint_hist.csv", hist_csv.str()},   {"joint_stats.csv", stats_csv.str()},
        {"lesions.csv", lesions.str()}};
    for (const auto& [name, text] : files) {
      if (!ec.lesions && std::string(name) == "lesions.csv") continue;
      write_text(out / name, text);
      result.files.push_back(name);
    }
    write_resolved_config(out, config);
  }
  return result;
}

AblationResult run_ablate(const RunConfig& config, const fs::path& out, std::ostream* progress) {
  config.validate();
  AblationResult result;
  const Ablation order[] = {Ablation::kWithoutMbcr, Ablation::kWithoutFasd, Ablation::kFull};
  std::map<std::string, std::vector<MethodSummary>> per_variant;
  std::ostringstream runs;
  runs << "variant,seed,psnr,ssim,nmae,nmse,batch_digest\n";
  for (std::uint64_t seed : config.train.ablation_seeds) {
    for (Ablation which : order) {
      RunConfig rc = config;
      rc.model = ablation_variant(config.model, which);
      rc.model.seed = seed;
      rc.train.seed = seed;
      rc.train.resume.clear();
      const std::string name = ablation_name(which);
      std::string slug = name;
      std::replace(slug.begin(), slug.end(), ' ', '_');
      std::replace(slug.begin(), slug.end(), '/', '_');
      const fs::path dir = out / ("seed_" + std::to_string(seed)) / slug;
      if (progress) *progress << "ablate: " << name << " seed " << seed << '\n';
      const auto t0 = std::chrono::steady_clock::now();
      const TrainResult tr = run_train(rc, dir, progress);
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      rc.eval.checkpoint = tr.final_checkpoint;
      const EvalResult er = run_eval(rc, load_eval_model(rc), dir / "eval");
      const MethodSummary m = er.summary.at("ALL").at(kGpcn);
      result.nasc = er.summary.at("ALL").at(kNasc);
      result.runs.push_back({name, seed, m, tr.batch_digest, seconds});
      per_variant[name].push_back(m);
      runs << name << ',' << seed << ',' << num(m.psnr) << ',' << num(m.ssim) << ',' << num(m.nmae) << ','
           << num(m.nmse) << ',' << tr.batch_digest << '\n';
      write_text(out / "ablation_runs.csv", runs.str());
    }
  }
  std::ostringstream table;
  table << "method,PSNR,SSIM,nMAE,NMSE\n";
  for (Ablation which : order) {
    const std::string name = ablation_name(which);
    MethodSummary mean;
    const auto& v = per_variant[name];
    for (const auto& m : v) {
      mean.psnr += m.psnr / static_cast<double>(v.size());
      mean.ssim += m.ssim / static_cast<double>(v.size());
      mean.nmae += m.nmae / static_cast<double>(v.size());
      mean.nmse += m.nmse / static_cast<double>(v.size());
      mean.samples += m.samples;
    }
    result.table.emplace_back(name, mean);
    table << name << ',' << num(mean.psnr) << ',' << num(mean.ssim) << ',' << num(mean.nmae) << ','
          << num(mean.nmse) << '\n';
  }
  write_text(out / "ablation.csv", table.str());
  write_resolved_config(out, config);
  return result;
}

void run_plot_data(const RunConfig& config, const fs::path& out) {
  const GpcnParams params = load_eval_model(config);
  RunConfig rc = config;
  rc.eval.lesions = false;
  run_eval(rc, params, out);
  fs::remove(out / "report.csv");
  fs::remove(out / "summary.csv");

  const auto manifest = read_manifest(config.data_root);
  const auto entries = select(manifest, config.eval.split, config.eval.families);
  std::ostringstream spec;
  spec << "family,index,image,row,col,log_amplitude,phase\n";
  std::vector<std::string> done;
  for (const auto& e : entries) {
    if (std::find(done.begin(), done.end(), e.family) != done.end()) continue;
    done.push_back(e.family);
    const PhantomSample s = load_sample(config.data_root, e);
    const Tensor pred = forward_one(params, s.nasc);
    const std::int64_t h = s.asc.dim(1), w = s.asc.dim(2);
    const std::pair<const char*, Tensor> images[] = {
        {"NASC", s.nasc}, {"GPCN", Tensor::from_data({1, h, w}, {pred.data().begin(), pred.data().end()})}, {"ASC", s.asc}};
    for (const auto& [name, img] : images) {
      const LogSpectrum ls = log_spectrum_export(img);
      for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
          const auto i = static_cast<std::size_t>(y * w + x);
          spec << e.family << ',' << e.index << ',' << name << ',' << y << ',' << x << ','
               << num(ls.log_amplitude.data()[i]) << ',' << num(ls.phase.data()[i]) << '\n';
        }
      }
    }
  }
  write_text(out / "spectrum.csv", spec.str());
}

void run_dose(const RunConfig& config, const fs::path& out) {
  if (config.dose.exams.empty() || config.dose.k_table.empty()) {
    throw ValidationError("dose requires [dose] exams and k_table paths");
  }
  for (const auto& p : {config.dose.exams, config.dose.k_table}) {
    if (!fs::exists(p)) throw ValidationError("dose input not found: " + p.string());
  }
  const dose::KTable table = dose::parse_k_table(io::read_file(config.dose.k_table));
  std::vector<dose::DoseRecord> records;
  for (const auto& row : dose::parse_exams(io::read_file(config.dose.exams))) {
    records.push_back(dose::compute_dose(row.ctdi_vol, row.scan_length, table.at(row.age_band), row.age_band));
  }
  write_text(out / "dose_records.csv", dose::records_csv(records));
  write_text(out / "dose_summary.csv", dose::summary_csv(dose::aggregate(records), table.authoritative));
  write_resolved_config(out, config);
}

}  // namespace gpcn
