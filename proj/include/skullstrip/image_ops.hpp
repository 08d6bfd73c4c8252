#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "skullstrip/errors.hpp"
#include "skullstrip/image.hpp"

namespace skullstrip {

/// Per-pixel partial derivatives and gradient magnitude of an image.
struct GradientField {
  int width = 0;
  int height = 0;
  std::vector<float> gx, gy, mag;

  GradientField() = default;
  GradientField(int w, int h)
      : width(w),
        height(h),
        gx(static_cast<size_t>(w) * h),
        gy(static_cast<size_t>(w) * h),
        mag(static_cast<size_t>(w) * h) {}
};

/// Min-max rescale to [0,1]. Constant images map to all zeros.
inline ImageSlice normalize(const ImageSlice& img) {
  if (img.empty()) throw ShapeMismatch("normalize: empty image");
  auto [mn_it, mx_it] = std::minmax_element(img.pixels.begin(), img.pixels.end());
  const float mn = *mn_it, mx = *mx_it;
  ImageSlice out(img.width, img.height);
  if (mx > mn) {
    const float span = mx - mn;
    for (size_t i = 0; i < img.size(); ++i) out.pixels[i] = (img.pixels[i] - mn) / span;
  }
  return out;
}

/// Gray-level mean shift with a hard range gate. Each pixel moves to the
/// mean intensity of window neighbors (Chebyshev radius spatial_radius)
/// within range_radius of its current value, until the move drops below
/// 1e-3 or max_iter is reached.
inline ImageSlice mean_shift_filter(const ImageSlice& img, int spatial_radius,
                                    float range_radius, int max_iter) {
  if (img.empty()) throw ShapeMismatch("mean_shift_filter: empty image");
  if (spatial_radius <= 0 || range_radius <= 0.0f || max_iter < 1)
    throw ShapeMismatch("mean_shift_filter: invalid parameters");
  ImageSlice out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      float mode = img.at(x, y);
      for (int it = 0; it < max_iter; ++it) {
        double sum = 0.0;
        int count = 0;
        const int y0 = std::max(0, y - spatial_radius);
        const int y1 = std::min(img.height - 1, y + spatial_radius);
        const int x0 = std::max(0, x - spatial_radius);
        const int x1 = std::min(img.width - 1, x + spatial_radius);
        for (int ny = y0; ny <= y1; ++ny)
          for (int nx = x0; nx <= x1; ++nx) {
            const float v = img.at(nx, ny);
            if (std::fabs(v - mode) <= range_radius) {
              sum += v;
              ++count;
            }
          }
        const float next = count > 0 ? static_cast<float>(sum / count) : mode;
        const float moved = std::fabs(next - mode);
        mode = next;
        if (moved < 1e-3f) break;
      }
      out.at(x, y) = mode;
    }
  }
  return out;
}

/// Central differences in the interior, one-sided on the borders;
/// mag = sqrt(gx^2 + gy^2).
inline GradientField gradient_magnitude(const ImageSlice& img) {
  if (img.width < 2 || img.height < 2)
    throw ImageTooSmall("gradient_magnitude needs at least 2x2, got " +
                        std::to_string(img.width) + "x" + std::to_string(img.height));
  GradientField g(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      float dx, dy;
      if (x == 0)
        dx = img.at(1, y) - img.at(0, y);
      else if (x == img.width - 1)
        dx = img.at(x, y) - img.at(x - 1, y);
      else
        dx = 0.5f * (img.at(x + 1, y) - img.at(x - 1, y));
      if (y == 0)
        dy = img.at(x, 1) - img.at(x, 0);
      else if (y == img.height - 1)
        dy = img.at(x, y) - img.at(x, y - 1);
      else
        dy = 0.5f * (img.at(x, y + 1) - img.at(x, y - 1));
      const size_t i = static_cast<size_t>(y) * img.width + x;
      g.gx[i] = dx;
      g.gy[i] = dy;
      g.mag[i] = std::sqrt(dx * dx + dy * dy);
    }
  }
  return g;
}

/// pixel >= level -> 1, else 0. Expects a normalized image.
inline BinaryMask threshold(const ImageSlice& img, float level) {
  BinaryMask m(img.width, img.height);
  for (size_t i = 0; i < img.size(); ++i) m.bits[i] = img.pixels[i] >= level ? 1 : 0;
  return m;
}

namespace detail {

// 3x3 cross structuring element; erode keeps a pixel only if itself and
// all 4-neighbors (inside the image treated as background outside) are set.
inline BinaryMask morph_once(const BinaryMask& m, bool erosion) {
  BinaryMask out(m.width, m.height);
  static constexpr int dx[4] = {1, -1, 0, 0};
  static constexpr int dy[4] = {0, 0, 1, -1};
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      bool acc = m.at(x, y) != 0;
      for (int k = 0; k < 4 && (erosion ? acc : !acc); ++k) {
        const int nx = x + dx[k], ny = y + dy[k];
        const bool nb =
            nx >= 0 && nx < m.width && ny >= 0 && ny < m.height && m.at(nx, ny) != 0;
        if (erosion)
          acc = acc && nb;
        else
          acc = acc || nb;
      }
      out.at(x, y) = acc ? 1 : 0;
    }
  return out;
}

}  // namespace detail

inline BinaryMask erode(BinaryMask m, int iterations) {
  for (int i = 0; i < iterations; ++i) m = detail::morph_once(m, true);
  return m;
}

inline BinaryMask dilate(BinaryMask m, int iterations) {
  for (int i = 0; i < iterations; ++i) m = detail::morph_once(m, false);
  return m;
}

/// 3x3 box smoothing with border renormalization, used to filter gradient
/// magnitudes before flooding.
inline std::vector<float> box_smooth3(const std::vector<float>& v, int w, int h) {
  std::vector<float> out(v.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double sum = 0.0;
      int count = 0;
      for (int ny = std::max(0, y - 1); ny <= std::min(h - 1, y + 1); ++ny)
        for (int nx = std::max(0, x - 1); nx <= std::min(w - 1, x + 1); ++nx) {
          sum += v[static_cast<size_t>(ny) * w + nx];
          ++count;
        }
      out[static_cast<size_t>(y) * w + x] = static_cast<float>(sum / count);
    }
  return out;
}

/// Separable Gaussian blur, kernel truncated at 3*sigma and renormalized
/// at the borders over the in-range taps.
inline std::vector<float> gaussian_blur(const std::vector<float>& v, int w, int h,
                                        float sigma) {
  if (sigma <= 0.0f) return v;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0f * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  for (int k = -radius; k <= radius; ++k)
    kernel[k + radius] = std::exp(-0.5 * (k * k) / (static_cast<double>(sigma) * sigma));

  std::vector<float> tmp(v.size()), out(v.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double sum = 0.0, wsum = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int nx = x + k;
        if (nx < 0 || nx >= w) continue;
        sum += kernel[k + radius] * v[static_cast<size_t>(y) * w + nx];
        wsum += kernel[k + radius];
      }
      tmp[static_cast<size_t>(y) * w + x] = static_cast<float>(sum / wsum);
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double sum = 0.0, wsum = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int ny = y + k;
        if (ny < 0 || ny >= h) continue;
        sum += kernel[k + radius] * tmp[static_cast<size_t>(ny) * w + x];
        wsum += kernel[k + radius];
      }
      out[static_cast<size_t>(y) * w + x] = static_cast<float>(sum / wsum);
    }
  return out;
}

/// Bilinear resize; corner-aligned sampling, clamped at the borders.
inline ImageSlice resize_bilinear(const ImageSlice& img, int new_w, int new_h) {
  if (img.empty() || new_w < 1 || new_h < 1)
    throw ShapeMismatch("resize_bilinear: invalid extents");
  if (new_w == img.width && new_h == img.height) return img;
  ImageSlice out(new_w, new_h);
  const float sx = new_w > 1 ? static_cast<float>(img.width - 1) / (new_w - 1) : 0.0f;
  const float sy = new_h > 1 ? static_cast<float>(img.height - 1) / (new_h - 1) : 0.0f;
  for (int y = 0; y < new_h; ++y)
    for (int x = 0; x < new_w; ++x) {
      const float fx = x * sx, fy = y * sy;
      const int x0 = std::min(static_cast<int>(fx), img.width - 1);
      const int y0 = std::min(static_cast<int>(fy), img.height - 1);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const int y1 = std::min(y0 + 1, img.height - 1);
      const float ax = fx - x0, ay = fy - y0;
      out.at(x, y) = (1 - ay) * ((1 - ax) * img.at(x0, y0) + ax * img.at(x1, y0)) +
                     ay * ((1 - ax) * img.at(x0, y1) + ax * img.at(x1, y1));
    }
  return out;
}

}  // namespace skullstrip
