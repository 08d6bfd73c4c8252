#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "skullstrip/errors.hpp"
#include "skullstrip/image.hpp"
#include "skullstrip/image_ops.hpp"

namespace skullstrip {

/// 8-bit RGB rendering of a slice with mask contours drawn on top.
struct OverlayImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> rgb;  // 3 bytes per pixel, row-major

  OverlayImage() = default;
  OverlayImage(int w, int h) : width(w), height(h), rgb(static_cast<size_t>(w) * h * 3) {}

  void set(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
    const size_t i = (static_cast<size_t>(y) * width + x) * 3;
    rgb[i] = r;
    rgb[i + 1] = g;
    rgb[i + 2] = b;
  }
};

namespace detail {

// contour = mask pixel with at least one zero 4-neighbor; outside the
// image counts as zero
inline bool is_contour(const BinaryMask& m, int x, int y) {
  if (!m.at(x, y)) return false;
  static constexpr int dx[4] = {1, -1, 0, 0};
  static constexpr int dy[4] = {0, 0, 1, -1};
  for (int k = 0; k < 4; ++k) {
    const int nx = x + dx[k], ny = y + dy[k];
    if (nx < 0 || nx >= m.width || ny < 0 || ny >= m.height || !m.at(nx, ny))
      return true;
  }
  return false;
}

}  // namespace detail

/// Grayscale base with the prediction contour in red, the ground-truth
/// contour in green, and their overlap in yellow.
inline OverlayImage render_overlay(const ImageSlice& img, const BinaryMask& pred,
                                   const std::optional<BinaryMask>& truth = {}) {
  require_same_extents(img.width, img.height, pred.width, pred.height,
                       "render_overlay");
  if (truth)
    require_same_extents(img.width, img.height, truth->width, truth->height,
                         "render_overlay");
  const ImageSlice base = normalize(img);
  OverlayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const bool on_pred = detail::is_contour(pred, x, y);
      const bool on_truth = truth && detail::is_contour(*truth, x, y);
      if (on_pred && on_truth)
        out.set(x, y, 255, 255, 0);
      else if (on_pred)
        out.set(x, y, 255, 0, 0);
      else if (on_truth)
        out.set(x, y, 0, 255, 0);
      else {
        const auto g =
            static_cast<uint8_t>(std::floor(base.at(x, y) * 255.0f + 0.5f));
        out.set(x, y, g, g, g);
      }
    }
  return out;
}

/// Binary PPM (P6), needs no codec and diffs bit-exactly.
inline void write_ppm(const OverlayImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open " + path + " for writing");
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()),
            static_cast<std::streamsize>(img.rgb.size()));
  if (!out) throw IoFailure("write failed: " + path);
}

}  // namespace skullstrip
