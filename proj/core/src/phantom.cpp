// SPDX-License-Identifier: Apache-2.0
#include "gpcn/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "gpcn/transforms.hpp"

namespace gpcn {

namespace {

struct Plane {
  std::int64_t h, w;
};

Plane plane_of(const Tensor& t, const char* op) {
  if (t.ndim() == 2) return {t.dim(0), t.dim(1)};
  if (t.ndim() == 3 && t.dim(0) == 1) return {t.dim(1), t.dim(2)};
  throw ValidationError(std::string(op) + ": expected [1,H,W] or [H,W], got " + shape_str(t.shape()));
}

void require_positive(double v, const std::string& family, const char* field) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ValidationError("family " + family + ": " + field + " must be positive and finite");
  }
}

// Bilinear sample with edge clamping; (y, x) in pixel-centre coordinates.
double bilinear(const double* img, Plane p, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(p.h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(p.w - 1));
  const auto y0 = static_cast<std::int64_t>(y), x0 = static_cast<std::int64_t>(x);
  const std::int64_t y1 = std::min(y0 + 1, p.h - 1), x1 = std::min(x0 + 1, p.w - 1);
  const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
  const double top = img[y0 * p.w + x0] * (1.0 - fx) + img[y0 * p.w + x1] * fx;
  const double bottom = img[y1 * p.w + x0] * (1.0 - fx) + img[y1 * p.w + x1] * fx;
  return top * (1.0 - fy) + bottom * fy;
}

// Distance from (y, x) to the image edge [-0.5, extent - 0.5] along (dy, dx).
double exit_distance(Plane p, double y, double x, double dy, double dx) {
  double t = std::numeric_limits<double>::infinity();
  constexpr double kTiny = 1e-12;
  if (dx > kTiny) t = std::min(t, (static_cast<double>(p.w) - 0.5 - x) / dx);
  if (dx < -kTiny) t = std::min(t, (-0.5 - x) / dx);
  if (dy > kTiny) t = std::min(t, (static_cast<double>(p.h) - 0.5 - y) / dy);
  if (dy < -kTiny) t = std::min(t, (-0.5 - y) / dy);
  return t;
}

// Squared 1-D distance transform (lower envelope of parabolas), in place.
void edt_1d(std::vector<double>& f, std::vector<double>& d, std::vector<std::int64_t>& v, std::vector<double>& z) {
  const auto n = static_cast<std::int64_t>(f.size());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::int64_t k = -1;
  for (std::int64_t q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    const double fq = f[q] + static_cast<double>(q * q);
    while (k >= 0) {
      const std::int64_t r = v[k];
      const double s = (fq - (f[r] + static_cast<double>(r * r))) / (2.0 * static_cast<double>(q - r));
      if (s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = k == 0 ? -kInf : (fq - (f[v[k - 1]] + static_cast<double>(v[k - 1] * v[k - 1]))) /
                                 (2.0 * static_cast<double>(q - v[k - 1]));
    z[k + 1] = kInf;
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), kInf);
    return;
  }
  std::int64_t j = 0;
  for (std::int64_t q = 0; q < n; ++q) {
    while (z[j + 1] < static_cast<double>(q)) ++j;
    const double diff = static_cast<double>(q - v[j]);
    d[q] = diff * diff + f[v[j]];
  }
}

struct Ellipse {
  double cy, cx, ry, rx, angle;

  bool contains(double y, double x) const {
    const double c = std::cos(angle), s = std::sin(angle);
    const double dy = y - cy, dx = x - cx;
    const double u = (c * dx + s * dy) / rx, v = (-s * dx + c * dy) / ry;
    return u * u + v * v <= 1.0;
  }
};

}  // namespace

std::string region_name(Region r) {
  switch (r) {
    case Region::kBackground: return "background";
    case Region::kSoft: return "soft";
    case Region::kLung: return "lung";
    case Region::kBone: return "bone";
  }
  return "unknown";
}

void DomainFamily::validate() const {
  if (name.empty()) throw ValidationError("family name must not be empty");
  require_positive(body_min, name, "body_min");
  require_positive(body_max, name, "body_max");
  if (body_min > body_max || body_max > 0.98) throw ValidationError("family " + name + ": body range invalid");
  require_positive(pixel_cm, name, "pixel_cm");
  require_positive(mu_soft, name, "mu_soft");
  require_positive(mu_lung, name, "mu_lung");
  require_positive(mu_bone, name, "mu_bone");
  require_positive(activity_soft, name, "activity_soft");
  require_positive(activity_lung, name, "activity_lung");
  require_positive(activity_bone, name, "activity_bone");
  require_positive(organ_uptake_min, name, "organ_uptake_min");
  require_positive(organ_uptake_max, name, "organ_uptake_max");
  if (lesions_min < 0 || lesions_max < lesions_min) throw ValidationError("family " + name + ": lesion count range invalid");
  require_positive(lesion_contrast_min, name, "lesion_contrast_min");
  require_positive(lesion_contrast_max, name, "lesion_contrast_max");
  require_positive(lesion_radius_min, name, "lesion_radius_min");
  require_positive(lesion_radius_max, name, "lesion_radius_max");
  require_positive(resolution_sigma, name, "resolution_sigma");
  require_positive(scatter_sigma, name, "scatter_sigma");
  // Zero scatter is allowed so the forward model can be checked against the pure attenuation case.
  if (!(scatter_fraction >= 0.0) || !std::isfinite(scatter_fraction)) {
    throw ValidationError("family " + name + ": scatter_fraction must be non-negative and finite");
  }
  if (counts_per_unit < 0.0) throw ValidationError("family " + name + ": counts_per_unit must be non-negative");
}

const std::vector<DomainFamily>& builtin_families() {
  static const std::vector<DomainFamily> families = [] {
    std::vector<DomainFamily> f;
    DomainFamily base;

    DomainFamily a = base;
    a.name = "siemens_fdg";
    f.push_back(a);

    DomainFamily b = base;
    b.name = "siemens_dotatate";
    b.activity_soft = 0.6;
    b.activity_lung = 0.15;
    b.organ_uptake_min = 2.5;
    b.organ_uptake_max = 4.0;
    b.lesions_min = 1;
    b.lesion_contrast_min = 5.0;
    b.counts_per_unit = 180.0;
    f.push_back(b);

    DomainFamily c = base;
    c.name = "siemens_mfbg";
    c.body_min = 0.60;
    c.body_max = 0.78;
    c.activity_lung = 0.4;
    c.lesions_max = 3;
    c.lesion_contrast_max = 6.0;
    c.resolution_sigma = 1.0;
    c.counts_per_unit = 220.0;
    f.push_back(c);

    DomainFamily d = base;
    d.name = "sinounion_fdg";
    d.pixel_cm = 0.55;
    d.resolution_sigma = 1.2;
    d.scatter_sigma = 5.0;
    d.scatter_fraction = 0.18;
    d.counts_per_unit = 260.0;
    f.push_back(d);

    DomainFamily e = base;
    e.name = "sinounion_mfbg";
    e.pixel_cm = 0.55;
    e.body_min = 0.62;
    e.body_max = 0.80;
    e.activity_lung = 0.4;
    e.lesions_max = 3;
    e.lesion_contrast_max = 6.0;
    e.resolution_sigma = 1.2;
    e.scatter_sigma = 5.0;
    e.scatter_fraction = 0.18;
    e.counts_per_unit = 140.0;
    f.push_back(e);

    DomainFamily g = base;
    g.name = "siemens_fapi";
    g.body_min = 0.75;
    g.body_max = 0.90;
    g.activity_soft = 0.8;
    g.organ_uptake_min = 1.1;
    g.organ_uptake_max = 1.6;
    g.lesions_min = 1;
    g.lesion_contrast_min = 4.0;
    g.mu_bone = 0.18;
    g.counts_per_unit = 240.0;
    f.push_back(g);
    return f;
  }();
  return families;
}

const DomainFamily& find_family(const std::string& name) {
  for (const auto& f : builtin_families()) {
    if (f.name == name) return f;
  }
  throw ValidationError("unknown phantom family '" + name + "'");
}

std::vector<std::string> joint_family_names() {
  const auto& all = builtin_families();
  std::vector<std::string> names;
  for (std::size_t i = 0; i < 5; ++i) names.push_back(all[i].name);
  return names;
}

std::string single_domain_family_name() { return "siemens_fdg"; }

Tensor PhantomSample::body_mask() const {
  std::vector<double> m(labels.data().begin(), labels.data().end());
  for (auto& v : m) v = v > 0.0 ? 1.0 : 0.0;
  return Tensor::from_data(labels.shape(), std::move(m));
}

Tensor survival_map(const Tensor& mu, const ForwardModelOptions& options) {
  const Plane p = plane_of(mu, "survival_map");
  if (options.angles <= 0) throw ValidationError("survival_map: angles must be positive");
  if (!(options.step > 0.0)) throw ValidationError("survival_map: step must be positive");
  const double* m = mu.data().data();
  for (std::int64_t i = 0; i < p.h * p.w; ++i) {
    if (m[i] < 0.0) throw ValidationError("survival_map: negative attenuation coefficient");
  }
  std::vector<double> dirs_y(static_cast<std::size_t>(options.angles)), dirs_x(dirs_y.size());
  for (int k = 0; k < options.angles; ++k) {
    const double theta = 2.0 * std::numbers::pi * k / options.angles;
    dirs_y[static_cast<std::size_t>(k)] = std::sin(theta);
    dirs_x[static_cast<std::size_t>(k)] = std::cos(theta);
  }
  std::vector<double> out(static_cast<std::size_t>(p.h * p.w));
  for (std::int64_t y = 0; y < p.h; ++y) {
    for (std::int64_t x = 0; x < p.w; ++x) {
      double total = 0.0;
      for (int k = 0; k < options.angles; ++k) {
        const double dy = dirs_y[static_cast<std::size_t>(k)], dx = dirs_x[static_cast<std::size_t>(k)];
        const double len = exit_distance(p, static_cast<double>(y), static_cast<double>(x), dy, dx);
        const auto steps = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(len / options.step)));
        const double h = len / static_cast<double>(steps);
        // Trapezoid rule over equally spaced samples.
        double integral = 0.5 * (bilinear(m, p, static_cast<double>(y), static_cast<double>(x)) +
                                 bilinear(m, p, static_cast<double>(y) + dy * len, static_cast<double>(x) + dx * len));
        for (std::int64_t i = 1; i < steps; ++i) {
          const double t = h * static_cast<double>(i);
          integral += bilinear(m, p, static_cast<double>(y) + dy * t, static_cast<double>(x) + dx * t);
        }
        total += std::exp(-integral * h);
      }
      out[static_cast<std::size_t>(y * p.w + x)] = total / options.angles;
    }
  }
  return Tensor::from_data(mu.shape(), std::move(out));
}

Tensor gaussian_blur(const Tensor& image, double sigma) {
  const Plane p = plane_of(image, "gaussian_blur");
  if (!(sigma > 0.0)) throw ValidationError("gaussian_blur: sigma must be positive");
  const auto radius = static_cast<std::int64_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  for (std::int64_t i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
  }
  // One separable pass along a strided line, normalized by in-image kernel mass.
  auto pass = [&](const std::vector<double>& src, std::vector<double>& dst, bool along_x) {
    const std::int64_t lines = along_x ? p.h : p.w, len = along_x ? p.w : p.h;
    for (std::int64_t l = 0; l < lines; ++l) {
      for (std::int64_t i = 0; i < len; ++i) {
        double acc = 0.0, mass = 0.0;
        for (std::int64_t k = -radius; k <= radius; ++k) {
          const std::int64_t j = i + k;
          if (j < 0 || j >= len) continue;
          const double wk = kernel[static_cast<std::size_t>(k + radius)];
          acc += wk * src[static_cast<std::size_t>(along_x ? l * p.w + j : j * p.w + l)];
          mass += wk;
        }
        dst[static_cast<std::size_t>(along_x ? l * p.w + i : i * p.w + l)] = acc / mass;
      }
    }
  };
  std::vector<double> src(image.data().begin(), image.data().end()), tmp(src.size());
  pass(src, tmp, true);
  pass(tmp, src, false);
  return Tensor::from_data(image.shape(), std::move(src));
}

ForwardModelResult attenuate_and_scatter(const Tensor& asc, const Tensor& mu, const DomainFamily& family, Rng* noise,
                                         const ForwardModelOptions& options) {
  if (asc.shape() != mu.shape()) {
    throw ValidationError("attenuate_and_scatter: activity " + shape_str(asc.shape()) + " and attenuation " +
                          shape_str(mu.shape()) + " differ");
  }
  if (family.scatter_fraction < 0.0) throw ValidationError("attenuate_and_scatter: negative scatter fraction");
  ForwardModelResult r;
  r.survival = survival_map(mu, options);
  std::vector<double> primary(asc.data().begin(), asc.data().end());
  for (std::size_t i = 0; i < primary.size(); ++i) primary[i] *= r.survival.data()[i];
  r.primary = Tensor::from_data(asc.shape(), primary);
  std::vector<double> scatter(primary.size(), 0.0);
  if (family.scatter_fraction > 0.0) {
    const Tensor blurred = gaussian_blur(r.primary, family.scatter_sigma);
    for (std::size_t i = 0; i < scatter.size(); ++i) scatter[i] = family.scatter_fraction * blurred.data()[i];
  }
  r.scatter = Tensor::from_data(asc.shape(), scatter);
  std::vector<double> nasc(primary.size());
  for (std::size_t i = 0; i < nasc.size(); ++i) nasc[i] = primary[i] + scatter[i];
  if (noise != nullptr && family.counts_per_unit > 0.0) {
    for (auto& v : nasc) {
      const double lambda = v * family.counts_per_unit;
      if (lambda <= 0.0) {
        v = 0.0;
        continue;
      }
      std::poisson_distribution<long long> draw(lambda);
      v = static_cast<double>(draw(*noise)) / family.counts_per_unit;
    }
  }
  r.nasc = Tensor::from_data(asc.shape(), std::move(nasc));
  return r;
}

Tensor depth_map(const Tensor& body_mask) {
  const Plane p = plane_of(body_mask, "depth_map");
  const double* m = body_mask.data().data();
  auto inside = [&](std::int64_t y, std::int64_t x) {
    return y >= 0 && y < p.h && x >= 0 && x < p.w && m[y * p.w + x] > 0.5;
  };
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> f(static_cast<std::size_t>(p.h * p.w), kInf);
  bool any = false;
  for (std::int64_t y = 0; y < p.h; ++y) {
    for (std::int64_t x = 0; x < p.w; ++x) {
      if (!inside(y, x)) continue;
      if (!inside(y - 1, x) || !inside(y + 1, x) || !inside(y, x - 1) || !inside(y, x + 1)) {
        f[static_cast<std::size_t>(y * p.w + x)] = 0.0;
        any = true;
      }
    }
  }
  std::vector<double> out(f.size(), 0.0);
  if (!any) return Tensor::from_data(body_mask.shape(), std::move(out));

  const std::int64_t n = std::max(p.h, p.w);
  std::vector<double> line, dist;
  std::vector<std::int64_t> v(static_cast<std::size_t>(n));
  std::vector<double> z(static_cast<std::size_t>(n + 1));
  for (std::int64_t x = 0; x < p.w; ++x) {
    line.assign(static_cast<std::size_t>(p.h), 0.0);
    dist.assign(line.size(), 0.0);
    for (std::int64_t y = 0; y < p.h; ++y) line[static_cast<std::size_t>(y)] = f[static_cast<std::size_t>(y * p.w + x)];
    edt_1d(line, dist, v, z);
    for (std::int64_t y = 0; y < p.h; ++y) f[static_cast<std::size_t>(y * p.w + x)] = dist[static_cast<std::size_t>(y)];
  }
  for (std::int64_t y = 0; y < p.h; ++y) {
    line.assign(f.begin() + y * p.w, f.begin() + (y + 1) * p.w);
    dist.assign(line.size(), 0.0);
    edt_1d(line, dist, v, z);
    for (std::int64_t x = 0; x < p.w; ++x) {
      if (inside(y, x)) out[static_cast<std::size_t>(y * p.w + x)] = std::sqrt(dist[static_cast<std::size_t>(x)]);
    }
  }
  return Tensor::from_data(body_mask.shape(), std::move(out));
}

PhantomSample generate_phantom(std::uint64_t seed, const DomainFamily& family, std::int64_t height,
                               std::int64_t width) {
  family.validate();
  if (!is_power_of_two(height) || !is_power_of_two(width)) {
    throw ValidationError("generate_phantom: height and width must be powers of two, got " + std::to_string(height) +
                          "x" + std::to_string(width));
  }
  Rng rng(seed);
  const double hw = static_cast<double>(width) / 2.0, hh = static_cast<double>(height) / 2.0;
  const double rx = rng.uniform(family.body_min, family.body_max) * hw;
  const double ry = std::min(rx * rng.uniform(0.65, 0.9), 0.95 * hh);
  const Ellipse body{hh - 0.5 + rng.uniform(-0.05, 0.05) * hh, hw - 0.5 + rng.uniform(-0.05, 0.05) * hw, ry, rx,
                     rng.uniform(-0.1, 0.1)};

  std::vector<Ellipse> lungs;
  for (const double side : {-1.0, 1.0}) {
    lungs.push_back({body.cy - ry * rng.uniform(0.05, 0.2), body.cx + side * rx * rng.uniform(0.38, 0.5),
                     ry * rng.uniform(0.4, 0.55), rx * rng.uniform(0.22, 0.3), rng.uniform(-0.3, 0.3)});
  }
  std::vector<Ellipse> bones;
  const double spine_r = std::max(1.5, rx * rng.uniform(0.1, 0.14));
  bones.push_back({body.cy + ry * rng.uniform(0.55, 0.65), body.cx, spine_r, spine_r * 1.1, 0.0});
  const int ribs = 6 + static_cast<int>(rng.below(5));
  for (int i = 0; i < ribs; ++i) {
    const double t = std::numbers::pi * (0.15 + 0.7 * (static_cast<double>(i) + rng.uniform()) / ribs);
    const double side = i % 2 == 0 ? 1.0 : -1.0;
    const double r = rng.uniform(0.8, 1.3);
    bones.push_back({body.cy - 0.82 * ry * std::sin(t) * 0.9, body.cx + side * 0.86 * rx * std::cos(t * 0.5), r,
                     r * 1.6, rng.uniform(0.0, std::numbers::pi)});
  }
  std::vector<std::pair<Ellipse, double>> organs;
  const int organ_count = 1 + static_cast<int>(rng.below(3));
  for (int i = 0; i < organ_count; ++i) {
    organs.push_back({{body.cy + ry * rng.uniform(-0.1, 0.45), body.cx + rx * rng.uniform(-0.4, 0.4),
                       ry * rng.uniform(0.12, 0.25), rx * rng.uniform(0.12, 0.25), rng.uniform(0.0, std::numbers::pi)},
                      rng.uniform(family.organ_uptake_min, family.organ_uptake_max)});
  }

  const std::int64_t n = height * width;
  std::vector<double> labels(static_cast<std::size_t>(n), 0.0), activity(labels.size(), 0.0), mu(labels.size(), 0.0);
  for (std::int64_t y = 0; y < height; ++y) {
    for (std::int64_t x = 0; x < width; ++x) {
      const auto fy = static_cast<double>(y), fx = static_cast<double>(x);
      if (!body.contains(fy, fx)) continue;
      const auto i = static_cast<std::size_t>(y * width + x);
      Region r = Region::kSoft;
      if (std::any_of(lungs.begin(), lungs.end(), [&](const Ellipse& e) { return e.contains(fy, fx); })) {
        r = Region::kLung;
      }
      if (std::any_of(bones.begin(), bones.end(), [&](const Ellipse& e) { return e.contains(fy, fx); })) {
        r = Region::kBone;
      }
      labels[i] = static_cast<double>(r);
      switch (r) {
        case Region::kSoft: {
          double a = family.activity_soft;
          for (const auto& [e, uptake] : organs) {
            if (e.contains(fy, fx)) a = family.activity_soft * uptake;
          }
          activity[i] = a;
          mu[i] = family.mu_soft * family.pixel_cm;
          break;
        }
        case Region::kLung:
          activity[i] = family.activity_lung;
          mu[i] = family.mu_lung * family.pixel_cm;
          break;
        case Region::kBone:
          activity[i] = family.activity_bone;
          mu[i] = family.mu_bone * family.pixel_cm;
          break;
        case Region::kBackground:
          break;
      }
    }
  }

  PhantomSample s;
  s.family = family.name;
  const int lesion_count =
      family.lesions_min + static_cast<int>(rng.below(static_cast<std::uint64_t>(family.lesions_max - family.lesions_min + 1)));
  for (int l = 0; l < lesion_count; ++l) {
    const double radius = rng.uniform(family.lesion_radius_min, family.lesion_radius_max);
    const double contrast = rng.uniform(family.lesion_contrast_min, family.lesion_contrast_max);
    // Centre drawn inside the body ellipse, away from its rim.
    const double rho = std::sqrt(rng.uniform()) * 0.8, phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double cy = body.cy + rho * ry * std::sin(phi), cx = body.cx + rho * rx * std::cos(phi);
    std::vector<double> mask(static_cast<std::size_t>(n), 0.0);
    bool nonempty = false;
    for (std::int64_t y = 0; y < height; ++y) {
      for (std::int64_t x = 0; x < width; ++x) {
        const auto i = static_cast<std::size_t>(y * width + x);
        const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
        if (labels[i] > 0.0 && dy * dy + dx * dx <= radius * radius) {
          mask[i] = 1.0;
          activity[i] = family.activity_soft * contrast;
          nonempty = true;
        }
      }
    }
    if (nonempty) s.lesions.push_back(Tensor::from_data({1, height, width}, std::move(mask)));
  }

  const Shape shape{1, height, width};
  s.labels = Tensor::from_data(shape, labels);
  s.mu = Tensor::from_data(shape, std::move(mu));
  // The scanner blur smears activity past the skin line; the target keeps that.
  s.asc = gaussian_blur(Tensor::from_data(shape, std::move(activity)), family.resolution_sigma);
  Rng noise(derive_seed(seed, 1));
  s.nasc = attenuate_and_scatter(s.asc, s.mu, family, &noise).nasc;
  s.depth = depth_map(s.body_mask());
  return s;
}

}  // namespace gpcn
