// SPDX-License-Identifier: Apache-2.0
//
// Image-quality, VOI, texture, regional and depth-resolved error metrics.
// Images are plain value spans of equal length; masks use nonzero = inside.
#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "gpcn/phantom.hpp"

namespace gpcn::metrics {

/// Returned by psnr when the mean squared error is exactly zero.
inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

double mse(std::span<const double> pred, std::span<const double> ref);
/// 10 log10(range^2 / MSE); range defaults to max(ref) when non-positive is passed.
double psnr(std::span<const double> pred, std::span<const double> ref, double data_range = 0.0);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 0.0;  // <= 0: max(ref), falling back to 1 for an all-zero reference
};

/// Gaussian-weighted single-scale SSIM, averaged over valid window positions.
double ssim(std::span<const double> pred, std::span<const double> ref, std::int64_t height, std::int64_t width,
            const SsimOptions& options = {});

/// 100 * sum|pred - ref| / sum|ref|.
double nmae(std::span<const double> pred, std::span<const double> ref);
/// sum (pred - ref)^2 / sum ref^2.
double nmse(std::span<const double> pred, std::span<const double> ref);

struct VoiStats {
  double suv_max = 0.0;
  double suv_mean = 0.0;
  double volume = 0.0;
  double tlg = 0.0;
};

VoiStats voi_stats(std::span<const double> image, std::span<const double> mask);

struct GlcmOptions {
  int levels = 16;
  std::vector<std::pair<int, int>> offsets = {{0, 1}, {1, 0}};  // (dy, dx)
};

struct GlcmFeatures {
  double contrast = 0.0;
  double homogeneity = 0.0;
  std::vector<double> matrix;  // levels x levels, normalized, symmetric
};

/// Quantizes masked pixels into equal-width bins over the masked range and
/// accumulates symmetric co-occurrences for pairs with both ends in the mask.
GlcmFeatures glcm_features(std::span<const double> image, std::span<const double> mask, std::int64_t height,
                           std::int64_t width, const GlcmOptions& options = {});

/// Absolute relative bias (%) of region means, for each region present in `labels`.
std::map<Region, double> region_bias(std::span<const double> pred, std::span<const double> ref,
                                     std::span<const double> labels);

struct DepthProfile {
  std::vector<double> edges;     // n_bins + 1, spanning [0, max depth]
  std::vector<double> mean;      // mean |pred - ref| / ref
  std::vector<double> variance;  // population variance within the bin
  std::vector<std::int64_t> count;
};

/// Relative error binned by depth over pixels with depth-support (body) and ref >= eps.
DepthProfile depth_error_profile(std::span<const double> pred, std::span<const double> ref,
                                 std::span<const double> depth, std::span<const double> body_mask, int n_bins,
                                 double eps = 1e-6);

/// Per-pixel accumulator for pooling depth-binned errors across images.
struct DepthErrorSamples {
  std::vector<double> depth;
  std::vector<double> error;
  void add(std::span<const double> pred, std::span<const double> ref, std::span<const double> depth_map,
           std::span<const double> body_mask, double eps = 1e-6);
};

/// Bins already-pooled samples.
DepthProfile bin_depth_errors(const DepthErrorSamples& samples, int n_bins);
/// Mean error per depth quartile (ranked by depth, ties kept together by stable order).
std::vector<double> depth_quartile_errors(const DepthErrorSamples& samples);

struct JointHistogram {
  std::vector<double> counts;  // n_bins x n_bins, row = ref bin, column = pred bin
  double lo = 0.0, hi = 0.0;
  int n_bins = 0;
  double pearson_r = 0.0;
  double rmse = 0.0;
};

/// Statistics over masked pixels (all pixels when mask is empty).
JointHistogram joint_histogram(std::span<const double> pred, std::span<const double> ref,
                               std::span<const double> mask, int n_bins);

double pearson(std::span<const double> a, std::span<const double> b);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;     // finite values used
  std::size_t excluded = 0;  // non-finite values skipped
};

/// Mean and population standard deviation over finite values.
MeanStd summarize(std::span<const double> values);

}  // namespace gpcn::metrics
