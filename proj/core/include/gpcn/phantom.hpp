// SPDX-License-Identifier: Apache-2.0
//
// Synthetic 2-D PET phantoms and the attenuation/scatter forward model that
// turns a corrected image (ASC) into an uncorrected one (NASC).
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gpcn/rng.hpp"
#include "gpcn/tensor.hpp"

namespace gpcn {

enum class Region : int { kBackground = 0, kSoft = 1, kLung = 2, kBone = 3 };

inline constexpr Region kBodyRegions[3] = {Region::kLung, Region::kSoft, Region::kBone};

std::string region_name(Region r);

/// A generating distribution standing in for one scanner/tracer combination.
struct DomainFamily {
  std::string name;
  double body_min = 0.70, body_max = 0.85;  // body semi-axis as a fraction of half the width
  double pixel_cm = 0.5;                    // pixel pitch; tissue mu is given per cm
  double mu_soft = 0.096, mu_lung = 0.03, mu_bone = 0.17;
  double activity_soft = 1.0, activity_lung = 0.3, activity_bone = 0.6;
  double organ_uptake_min = 1.3, organ_uptake_max = 2.2;  // relative to soft tissue
  int lesions_min = 0, lesions_max = 4;
  double lesion_contrast_min = 3.0, lesion_contrast_max = 8.0;
  double lesion_radius_min = 1.5, lesion_radius_max = 3.5;  // pixels
  double resolution_sigma = 0.8;  // scanner blur applied to the activity, pixels
  double scatter_sigma = 4.0;     // pixels
  double scatter_fraction = 0.15;
  double counts_per_unit = 300.0;  // Poisson scale; 0 disables noise

  /// Throws ValidationError when a distribution parameter is not strictly positive.
  void validate() const;
};

/// The six stand-in families. The first five form the joint-training pool.
const std::vector<DomainFamily>& builtin_families();
const DomainFamily& find_family(const std::string& name);
std::vector<std::string> joint_family_names();
/// Family used alone for single-domain training.
std::string single_domain_family_name();

struct PhantomSample {
  Tensor asc;     // [1,H,W]
  Tensor mu;      // [1,H,W], per pixel
  Tensor nasc;    // [1,H,W]
  Tensor labels;  // [1,H,W], Region codes
  Tensor depth;   // [1,H,W], pixels from the body surface
  std::vector<Tensor> lesions;  // each [1,H,W] of {0,1}
  std::string family;

  Tensor body_mask() const;
};

struct ForwardModelOptions {
  int angles = 8;
  double step = 0.5;  // ray-marching step, pixels
};

/// Mean over `angles` directions of exp(-line integral of mu) from each pixel
/// centre to the image border. mu: [1,H,W] or [H,W].
Tensor survival_map(const Tensor& mu, const ForwardModelOptions& options = {});

struct ForwardModelResult {
  Tensor survival;
  Tensor primary;
  Tensor scatter;
  Tensor nasc;
};

/// primary = asc * s; scatter = f_s * G_sigma(primary); nasc = primary + scatter,
/// Poisson-perturbed when `noise` is non-null and the family has a count scale.
ForwardModelResult attenuate_and_scatter(const Tensor& asc, const Tensor& mu, const DomainFamily& family,
                                         Rng* noise = nullptr, const ForwardModelOptions& options = {});

/// Separable Gaussian blur with reflect-free zero padding renormalized by the
/// kernel mass inside the image. Works on [1,H,W] or [H,W].
Tensor gaussian_blur(const Tensor& image, double sigma);

/// Distance from each body pixel to the nearest boundary pixel (a body pixel with
/// a 4-neighbour outside the body or the image). Zero outside the body.
Tensor depth_map(const Tensor& body_mask);

PhantomSample generate_phantom(std::uint64_t seed, const DomainFamily& family, std::int64_t height,
                               std::int64_t width);

}  // namespace gpcn
