#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "skullstrip/errors.hpp"
#include "skullstrip/image.hpp"
#include "skullstrip/image_ops.hpp"

namespace skullstrip {

/// Per-pixel displacement in pixels; the zero field is the identity warp.
struct DisplacementField {
  int width = 0;
  int height = 0;
  std::vector<float> dx, dy;

  DisplacementField() = default;
  DisplacementField(int w, int h)
      : width(w),
        height(h),
        dx(static_cast<size_t>(w) * h, 0.0f),
        dy(static_cast<size_t>(w) * h, 0.0f) {}
};

struct AugmentSpec {
  bool flip_h = false;
  bool flip_v = false;
  float rotation_deg = 0.0f;
  float translate_x = 0.0f;  // pixels
  float translate_y = 0.0f;
  float scale = 1.0f;
  float elastic_alpha = 0.0f;  // displacement amplitude, pixels
  float elastic_sigma = 8.0f;  // smoothing radius, pixels
  uint32_t seed = 0;

  void validate() const {
    if (!(scale > 0.0f)) throw ShapeMismatch("AugmentSpec: scale must be > 0");
    if (elastic_alpha > 0.0f && !(elastic_sigma > 0.0f))
      throw ShapeMismatch("AugmentSpec: elastic_sigma must be > 0");
  }

  bool is_identity_affine() const {
    return !flip_h && !flip_v && rotation_deg == 0.0f && translate_x == 0.0f &&
           translate_y == 0.0f && scale == 1.0f;
  }
};

/// Uniform [-1,1] noise per pixel, Gaussian-smoothed with radius sigma,
/// scaled by alpha. Same seed, same field.
inline DisplacementField make_elastic_field(int width, int height, float alpha,
                                            float sigma, uint32_t seed) {
  DisplacementField field(width, height);
  if (alpha == 0.0f) return field;
  if (!(sigma > 0.0f)) throw ShapeMismatch("make_elastic_field: sigma must be > 0");
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> uni(-1.0f, 1.0f);
  for (auto& v : field.dx) v = uni(rng);
  for (auto& v : field.dy) v = uni(rng);
  field.dx = gaussian_blur(field.dx, width, height, sigma);
  field.dy = gaussian_blur(field.dy, width, height, sigma);
  for (auto& v : field.dx) v *= alpha;
  for (auto& v : field.dy) v *= alpha;
  return field;
}

namespace detail {

// Inverse of the forward map flip -> rotate about center -> scale -> translate,
// evaluated at output pixel (x, y); elastic displacement is added on top.
struct InverseAffine {
  double cx, cy, tx, ty, inv_scale, cos_t, sin_t;
  double fx, fy;  // +-1 flip signs

  InverseAffine(int w, int h, const AugmentSpec& spec)
      : cx((w - 1) / 2.0),
        cy((h - 1) / 2.0),
        tx(spec.translate_x),
        ty(spec.translate_y),
        inv_scale(1.0 / spec.scale),
        fx(spec.flip_h ? -1.0 : 1.0),
        fy(spec.flip_v ? -1.0 : 1.0) {
    const double theta = spec.rotation_deg * std::numbers::pi / 180.0;
    cos_t = std::cos(theta);
    sin_t = std::sin(theta);
  }

  std::pair<double, double> operator()(double x, double y) const {
    const double ux = (x - cx - tx) * inv_scale;
    const double uy = (y - cy - ty) * inv_scale;
    const double rx = cos_t * ux + sin_t * uy;   // R(-theta)
    const double ry = -sin_t * ux + cos_t * uy;
    return {fx * rx + cx, fy * ry + cy};
  }
};

inline float sample_bilinear(const ImageSlice& img, double x, double y) {
  if (x < -1.0 || y < -1.0 || x > img.width || y > img.height) return 0.0f;
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const double ax = x - x0, ay = y - y0;
  auto pick = [&](int px, int py) -> double {
    if (px < 0 || px >= img.width || py < 0 || py >= img.height) return 0.0;
    return img.at(px, py);
  };
  return static_cast<float>((1 - ay) * ((1 - ax) * pick(x0, y0) + ax * pick(x0 + 1, y0)) +
                            ay * ((1 - ax) * pick(x0, y0 + 1) + ax * pick(x0 + 1, y0 + 1)));
}

inline uint8_t sample_nearest(const BinaryMask& mask, double x, double y) {
  const int px = static_cast<int>(std::lround(x)), py = static_cast<int>(std::lround(y));
  if (px < 0 || px >= mask.width || py < 0 || py >= mask.height) return 0;
  return mask.at(px, py) ? 1 : 0;
}

}  // namespace detail

/// One combined warp applied identically to image and mask: bilinear for
/// the image, nearest-neighbor for the mask. Out-of-bounds samples are 0.
inline std::pair<ImageSlice, BinaryMask> warp_pair(const ImageSlice& img,
                                                   const BinaryMask& mask,
                                                   const AugmentSpec& spec) {
  require_same_extents(img.width, img.height, mask.width, mask.height, "warp_pair");
  spec.validate();
  const int w = img.width, h = img.height;
  const detail::InverseAffine inv(w, h, spec);
  const bool elastic = spec.elastic_alpha > 0.0f;
  DisplacementField field;
  if (elastic)
    field = make_elastic_field(w, h, spec.elastic_alpha, spec.elastic_sigma, spec.seed);

  ImageSlice out_img(w, h);
  BinaryMask out_mask(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      auto [sx, sy] = inv(x, y);
      if (elastic) {
        const size_t i = static_cast<size_t>(y) * w + x;
        sx += field.dx[i];
        sy += field.dy[i];
      }
      out_img.at(x, y) = detail::sample_bilinear(img, sx, sy);
      out_mask.at(x, y) = detail::sample_nearest(mask, sx, sy);
    }
  return {std::move(out_img), std::move(out_mask)};
}

/// A random spec in the "slightly deformed" regime: coin-flip mirrors,
/// rotation in [-15, 15] degrees or occasionally a right angle, translation
/// up to 10% of the extent, scale in [0.9, 1.1], mild elastic warp.
inline AugmentSpec random_augment_spec(int width, int height, uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> uni01(0.0f, 1.0f);
  AugmentSpec spec;
  spec.flip_h = uni01(rng) < 0.5f;
  spec.flip_v = uni01(rng) < 0.5f;
  if (uni01(rng) < 0.2f) {
    const float right[3] = {90.0f, 180.0f, 270.0f};
    spec.rotation_deg = right[static_cast<int>(uni01(rng) * 3.0f) % 3];
  } else {
    spec.rotation_deg = -15.0f + 30.0f * uni01(rng);
  }
  spec.translate_x = 0.1f * width * (2.0f * uni01(rng) - 1.0f);
  spec.translate_y = 0.1f * height * (2.0f * uni01(rng) - 1.0f);
  spec.scale = 0.9f + 0.2f * uni01(rng);
  spec.elastic_alpha = 2.0f;
  spec.elastic_sigma = 8.0f;
  spec.seed = rng();
  return spec;
}

using SamplePair = std::pair<ImageSlice, BinaryMask>;

/// Returns the originals plus floor(fraction * N) freshly deformed pairs.
/// Deformation sources are drawn without replacement until the dataset is
/// exhausted, then again from a reshuffle.
inline std::vector<SamplePair> expand_dataset(const std::vector<SamplePair>& pairs,
                                              float fraction, uint32_t seed) {
  if (pairs.empty()) throw EmptyDataset("expand_dataset: no input pairs");
  if (fraction < 0.0f) throw ShapeMismatch("expand_dataset: fraction must be >= 0");
  const size_t n = pairs.size();
  const auto extra = static_cast<size_t>(fraction * static_cast<double>(n));

  std::mt19937 rng(seed);
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<SamplePair> out = pairs;
  out.reserve(n + extra);
  size_t cursor = 0;
  for (size_t k = 0; k < extra; ++k) {
    if (cursor == order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const auto& [img, mask] = pairs[order[cursor++]];
    AugmentSpec spec = random_augment_spec(img.width, img.height, rng());
    out.push_back(warp_pair(img, mask, spec));
  }
  return out;
}

}  // namespace skullstrip
