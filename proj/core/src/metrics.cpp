// SPDX-License-Identifier: Apache-2.0
#include "gpcn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace gpcn::metrics {

namespace {

void same_size(std::span<const double> a, std::span<const double> b, const char* op) {
  if (a.size() != b.size()) {
    throw ValidationError(std::string(op) + ": size mismatch (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  }
  if (a.empty()) throw ValidationError(std::string(op) + ": empty input");
}

void check_plane(std::span<const double> a, std::int64_t h, std::int64_t w, const char* op) {
  if (h <= 0 || w <= 0 || static_cast<std::int64_t>(a.size()) != h * w) {
    throw ValidationError(std::string(op) + ": buffer does not match " + std::to_string(h) + "x" + std::to_string(w));
  }
}

bool in_mask(std::span<const double> mask, std::size_t i) { return mask.empty() || mask[i] != 0.0; }

// Valid-mode separable filter with a symmetric kernel.
std::vector<double> filter_valid(const std::vector<double>& img, std::int64_t h, std::int64_t w,
                                 const std::vector<double>& k) {
  const auto n = static_cast<std::int64_t>(k.size());
  const std::int64_t wo = w - n + 1, ho = h - n + 1;
  std::vector<double> rows(static_cast<std::size_t>(h * wo));
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < wo; ++x) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < n; ++i) acc += k[static_cast<std::size_t>(i)] * img[static_cast<std::size_t>(y * w + x + i)];
      rows[static_cast<std::size_t>(y * wo + x)] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ho * wo));
  for (std::int64_t y = 0; y < ho; ++y) {
    for (std::int64_t x = 0; x < wo; ++x) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < n; ++i) acc += k[static_cast<std::size_t>(i)] * rows[static_cast<std::size_t>((y + i) * wo + x)];
      out[static_cast<std::size_t>(y * wo + x)] = acc;
    }
  }
  return out;
}

}  // namespace

double mse(std::span<const double> pred, std::span<const double> ref) {
  same_size(pred, ref, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - ref[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

double psnr(std::span<const double> pred, std::span<const double> ref, double data_range) {
  const double m = mse(pred, ref);
  if (data_range <= 0.0) data_range = *std::max_element(ref.begin(), ref.end());
  if (!(data_range > 0.0)) throw ValidationError("psnr: data range must be positive");
  if (m == 0.0) return kInfinitePsnr;
  return 10.0 * std::log10(data_range * data_range / m);
}

double ssim(std::span<const double> pred, std::span<const double> ref, std::int64_t height, std::int64_t width,
            const SsimOptions& options) {
  same_size(pred, ref, "ssim");
  check_plane(pred, height, width, "ssim");
  if (options.window <= 0 || options.window % 2 == 0) throw ValidationError("ssim: window must be odd and positive");
  if (height < options.window || width < options.window) {
    throw ValidationError("ssim: image smaller than the " + std::to_string(options.window) + "-pixel window");
  }
  double range = options.data_range;
  if (range <= 0.0) range = *std::max_element(ref.begin(), ref.end());
  if (!(range > 0.0)) range = 1.0;
  const double c1 = (options.k1 * range) * (options.k1 * range);
  const double c2 = (options.k2 * range) * (options.k2 * range);

  std::vector<double> k(static_cast<std::size_t>(options.window));
  const int r = options.window / 2;
  for (int i = -r; i <= r; ++i) k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (options.sigma * options.sigma));
  const double mass = std::accumulate(k.begin(), k.end(), 0.0);
  for (auto& v : k) v /= mass;

  const std::vector<double> x(pred.begin(), pred.end()), y(ref.begin(), ref.end());
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, height, width, k), my = filter_valid(y, height, width, k);
  const auto sxx = filter_valid(xx, height, width, k), syy = filter_valid(yy, height, width, k);
  const auto sxy = filter_valid(xy, height, width, k);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
    total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

double nmae(std::span<const double> pred, std::span<const double> ref) {
  same_size(pred, ref, "nmae");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    num += std::abs(pred[i] - ref[i]);
    den += std::abs(ref[i]);
  }
  if (den == 0.0) throw ValidationError("nmae: reference is identically zero");
  return 100.0 * num / den;
}

double nmse(std::span<const double> pred, std::span<const double> ref) {
  same_size(pred, ref, "nmse");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - ref[i];
    num += d * d;
    den += ref[i] * ref[i];
  }
  if (den == 0.0) throw ValidationError("nmse: reference is identically zero");
  return num / den;
}

VoiStats voi_stats(std::span<const double> image, std::span<const double> mask) {
  same_size(image, mask, "voi_stats");
  VoiStats s;
  s.suv_max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (std::size_t i = 0; i < image.size(); ++i) {
    if (mask[i] == 0.0) continue;
    s.suv_max = std::max(s.suv_max, image[i]);
    sum += image[i];
    s.volume += 1.0;
  }
  if (s.volume == 0.0) throw ValidationError("voi_stats: empty mask");
  s.suv_mean = sum / s.volume;
  s.tlg = s.suv_mean * s.volume;
  return s;
}

GlcmFeatures glcm_features(std::span<const double> image, std::span<const double> mask, std::int64_t height,
                           std::int64_t width, const GlcmOptions& options) {
  same_size(image, mask, "glcm_features");
  check_plane(image, height, width, "glcm_features");
  if (options.levels < 1) throw ValidationError("glcm_features: levels must be positive");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < image.size(); ++i) {
    if (mask[i] == 0.0) continue;
    lo = std::min(lo, image[i]);
    hi = std::max(hi, image[i]);
  }
  if (lo > hi) throw ValidationError("glcm_features: empty mask");
  const int levels = options.levels;
  std::vector<int> bin(image.size(), 0);
  for (std::size_t i = 0; i < image.size(); ++i) {
    if (mask[i] == 0.0 || hi == lo) continue;
    const int b = static_cast<int>(std::floor((image[i] - lo) / (hi - lo) * levels));
    bin[i] = std::clamp(b, 0, levels - 1);
  }
  GlcmFeatures f;
  f.matrix.assign(static_cast<std::size_t>(levels * levels), 0.0);
  double total = 0.0;
  for (const auto& [dy, dx] : options.offsets) {
    for (std::int64_t y = 0; y < height; ++y) {
      for (std::int64_t x = 0; x < width; ++x) {
        const std::int64_t y2 = y + dy, x2 = x + dx;
        if (y2 < 0 || y2 >= height || x2 < 0 || x2 >= width) continue;
        const auto a = static_cast<std::size_t>(y * width + x), b = static_cast<std::size_t>(y2 * width + x2);
        if (mask[a] == 0.0 || mask[b] == 0.0) continue;
        f.matrix[static_cast<std::size_t>(bin[a] * levels + bin[b])] += 1.0;
        f.matrix[static_cast<std::size_t>(bin[b] * levels + bin[a])] += 1.0;
        total += 2.0;
      }
    }
  }
  if (total == 0.0) {
    f.homogeneity = 1.0;
    return f;
  }
  for (auto& v : f.matrix) v /= total;
  for (int i = 0; i < levels; ++i) {
    for (int j = 0; j < levels; ++j) {
      const double p = f.matrix[static_cast<std::size_t>(i * levels + j)];
      f.contrast += p * (i - j) * (i - j);
      f.homogeneity += p / (1.0 + std::abs(i - j));
    }
  }
  return f;
}

std::map<Region, double> region_bias(std::span<const double> pred, std::span<const double> ref,
                                     std::span<const double> labels) {
  same_size(pred, ref, "region_bias");
  same_size(pred, labels, "region_bias");
  std::map<Region, double> sp, sr, n;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto r = static_cast<Region>(static_cast<int>(labels[i]));
    if (r == Region::kBackground) continue;
    sp[r] += pred[i];
    sr[r] += ref[i];
    n[r] += 1.0;
  }
  std::map<Region, double> out;
  for (const auto& [r, count] : n) {
    const double mp = sp[r] / count, mr = sr[r] / count;
    if (mr == 0.0) {
      out[r] = mp == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    } else {
      out[r] = 100.0 * std::abs(mp / mr - 1.0);
    }
  }
  return out;
}

void DepthErrorSamples::add(std::span<const double> pred, std::span<const double> ref,
                            std::span<const double> depth_map, std::span<const double> body_mask, double eps) {
  same_size(pred, ref, "depth_error_profile");
  same_size(pred, depth_map, "depth_error_profile");
  same_size(pred, body_mask, "depth_error_profile");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (body_mask[i] == 0.0 || ref[i] < eps) continue;
    depth.push_back(depth_map[i]);
    error.push_back(std::abs(pred[i] - ref[i]) / ref[i]);
  }
}

DepthProfile bin_depth_errors(const DepthErrorSamples& samples, int n_bins) {
  if (n_bins < 1) throw ValidationError("depth_error_profile: n_bins must be positive");
  DepthProfile p;
  const double max_depth = samples.depth.empty() ? 0.0 : *std::max_element(samples.depth.begin(), samples.depth.end());
  p.edges.resize(static_cast<std::size_t>(n_bins + 1));
  for (int b = 0; b <= n_bins; ++b) p.edges[static_cast<std::size_t>(b)] = max_depth * b / n_bins;
  p.mean.assign(static_cast<std::size_t>(n_bins), 0.0);
  p.variance.assign(p.mean.size(), 0.0);
  p.count.assign(p.mean.size(), 0);
  auto bin_of = [&](double d) {
    if (max_depth <= 0.0) return 0;
    return std::min(n_bins - 1, static_cast<int>(std::floor(d / max_depth * n_bins)));
  };
  for (std::size_t i = 0; i < samples.depth.size(); ++i) {
    const auto b = static_cast<std::size_t>(bin_of(samples.depth[i]));
    p.mean[b] += samples.error[i];
    ++p.count[b];
  }
  for (std::size_t b = 0; b < p.mean.size(); ++b) {
    if (p.count[b] > 0) p.mean[b] /= static_cast<double>(p.count[b]);
  }
  for (std::size_t i = 0; i < samples.depth.size(); ++i) {
    const auto b = static_cast<std::size_t>(bin_of(samples.depth[i]));
    const double d = samples.error[i] - p.mean[b];
    p.variance[b] += d * d;
  }
  for (std::size_t b = 0; b < p.mean.size(); ++b) {
    if (p.count[b] > 0) p.variance[b] /= static_cast<double>(p.count[b]);
  }
  return p;
}

DepthProfile depth_error_profile(std::span<const double> pred, std::span<const double> ref,
                                 std::span<const double> depth, std::span<const double> body_mask, int n_bins,
                                 double eps) {
  DepthErrorSamples s;
  s.add(pred, ref, depth, body_mask, eps);
  return bin_depth_errors(s, n_bins);
}

std::vector<double> depth_quartile_errors(const DepthErrorSamples& samples) {
  const std::size_t n = samples.depth.size();
  if (n < 4) throw ValidationError("depth_quartile_errors: need at least four samples");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return samples.depth[a] < samples.depth[b]; });
  std::vector<double> out(4, 0.0);
  for (int q = 0; q < 4; ++q) {
    const std::size_t lo = n * static_cast<std::size_t>(q) / 4, hi = n * static_cast<std::size_t>(q + 1) / 4;
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += samples.error[order[i]];
    out[static_cast<std::size_t>(q)] = s / static_cast<double>(hi - lo);
  }
  return out;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  same_size(a, b, "pearson");
  // Single-pass co-moment update.
  double ma = 0.0, mb = 0.0, caa = 0.0, cbb = 0.0, cab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double n = static_cast<double>(i + 1);
    const double da = a[i] - ma, db = b[i] - mb;
    ma += da / n;
    mb += db / n;
    caa += da * (a[i] - ma);
    cbb += db * (b[i] - mb);
    cab += da * (b[i] - mb);
  }
  if (caa == 0.0 || cbb == 0.0) return caa == cbb && ma == mb ? 1.0 : 0.0;
  return cab / std::sqrt(caa * cbb);
}

JointHistogram joint_histogram(std::span<const double> pred, std::span<const double> ref,
                               std::span<const double> mask, int n_bins) {
  same_size(pred, ref, "joint_histogram");
  if (!mask.empty()) same_size(pred, mask, "joint_histogram");
  if (n_bins < 1) throw ValidationError("joint_histogram: n_bins must be positive");
  std::vector<double> p, r;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!in_mask(mask, i)) continue;
    p.push_back(pred[i]);
    r.push_back(ref[i]);
  }
  if (p.empty()) throw ValidationError("joint_histogram: empty mask");
  JointHistogram j;
  j.n_bins = n_bins;
  j.lo = std::min(*std::min_element(p.begin(), p.end()), *std::min_element(r.begin(), r.end()));
  j.hi = std::max(*std::max_element(p.begin(), p.end()), *std::max_element(r.begin(), r.end()));
  j.counts.assign(static_cast<std::size_t>(n_bins * n_bins), 0.0);
  auto bin_of = [&](double v) {
    if (j.hi == j.lo) return 0;
    return std::clamp(static_cast<int>(std::floor((v - j.lo) / (j.hi - j.lo) * n_bins)), 0, n_bins - 1);
  };
  double se = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    j.counts[static_cast<std::size_t>(bin_of(r[i]) * n_bins + bin_of(p[i]))] += 1.0;
    se += (p[i] - r[i]) * (p[i] - r[i]);
  }
  j.rmse = std::sqrt(se / static_cast<double>(p.size()));
  j.pearson_r = pearson(p, r);
  return j;
}

MeanStd summarize(std::span<const double> values) {
  MeanStd s;
  double sum = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) {
      ++s.excluded;
      continue;
    }
    sum += v;
    ++s.count;
  }
  if (s.count == 0) return s;
  s.mean = sum / static_cast<double>(s.count);
  double ss = 0.0;
  for (double v : values) {
    if (std::isfinite(v)) ss += (v - s.mean) * (v - s.mean);
  }
  s.std = std::sqrt(ss / static_cast<double>(s.count));
  return s;
}

}  // namespace gpcn::metrics
