#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <queue>
#include <set>
#include <tuple>
#include <vector>

#include "skullstrip/errors.hpp"
#include "skullstrip/image.hpp"
#include "skullstrip/image_ops.hpp"

namespace skullstrip {

/// Per-pixel region labels: 0 = unassigned or watershed line, k >= 1 = region k.
struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<int> labels;

  LabelMap() = default;
  LabelMap(int w, int h) : width(w), height(h), labels(static_cast<size_t>(w) * h, 0) {}

  int& at(int x, int y) { return labels[static_cast<size_t>(y) * width + x]; }
  int at(int x, int y) const { return labels[static_cast<size_t>(y) * width + x]; }

  int max_label() const {
    int m = 0;
    for (int l : labels) m = std::max(m, l);
    return m;
  }
};

struct WatershedParams {
  float threshold_level = 0.3f;
  int spatial_radius = 2;
  float range_radius = 0.1f;
  int mean_shift_max_iter = 5;
  int fg_erosions = 1;
  int bg_dilations = 2;
  float min_area_fraction = 0.01f;  // of slice pixels
  bool smooth_gradient = true;
};

namespace detail {
constexpr int kNeigh8X[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
constexpr int kNeigh8Y[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
}  // namespace detail

/// 8-connectivity labeling; component labels are assigned in raster-scan
/// order of each component's first pixel, starting at 1.
inline LabelMap connected_components(const BinaryMask& mask) {
  LabelMap out(mask.width, mask.height);
  int next = 1;
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y) || out.at(x, y) != 0) continue;
      const int label = next++;
      stack.push_back({x, y});
      out.at(x, y) = label;
      while (!stack.empty()) {
        auto [cx, cy] = stack.back();
        stack.pop_back();
        for (int k = 0; k < 8; ++k) {
          const int nx = cx + detail::kNeigh8X[k], ny = cy + detail::kNeigh8Y[k];
          if (nx < 0 || nx >= mask.width || ny < 0 || ny >= mask.height) continue;
          if (mask.at(nx, ny) && out.at(nx, ny) == 0) {
            out.at(nx, ny) = label;
            stack.push_back({nx, ny});
          }
        }
      }
    }
  return out;
}

/// Threshold at level, then: eroded foreground components become labels
/// >= 2, the complement of the dilated foreground becomes sure-background
/// label 1, everything in between stays 0 (unknown).
inline LabelMap make_markers(const ImageSlice& img, float level, int fg_erosions,
                             int bg_dilations) {
  BinaryMask thresh = threshold(img, level);
  if (thresh.popcount() == 0)
    throw EmptyForeground("no pixels at or above level " + std::to_string(level));
  const BinaryMask fg = erode(thresh, fg_erosions);
  const BinaryMask bg_excl = dilate(thresh, bg_dilations);
  const LabelMap fg_cc = connected_components(fg);

  LabelMap markers(img.width, img.height);
  for (size_t i = 0; i < markers.labels.size(); ++i) {
    if (fg_cc.labels[i] > 0)
      markers.labels[i] = fg_cc.labels[i] + 1;
    else if (bg_excl.bits[i] == 0)
      markers.labels[i] = 1;
  }
  return markers;
}

/// Meyer priority flooding of the gradient landscape. Unknown pixels are
/// popped lowest-magnitude first (FIFO among equal magnitudes) and adopt
/// the label of their already-decided neighborhood; pixels reached by two
/// labels at once become watershed line (0). Marker pixels are never
/// relabeled.
inline LabelMap watershed_flood(const GradientField& grad, const LabelMap& markers) {
  require_same_extents(grad.width, grad.height, markers.width, markers.height,
                       "watershed_flood");
  const int w = grad.width, h = grad.height;
  {
    std::set<int> distinct;
    for (int l : markers.labels)
      if (l > 0) distinct.insert(l);
    if (distinct.size() < 2)
      throw TooFewMarkers("need >= 2 marker labels, got " +
                          std::to_string(distinct.size()));
  }

  LabelMap out = markers;
  enum : uint8_t { kUnknown = 0, kQueued = 1, kDecided = 2 };
  std::vector<uint8_t> state(out.labels.size(), kUnknown);
  for (size_t i = 0; i < out.labels.size(); ++i)
    if (out.labels[i] > 0) state[i] = kDecided;

  using Entry = std::tuple<float, uint64_t, int, int>;  // mag, seq, x, y
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> queue;
  uint64_t seq = 0;
  auto enqueue = [&](int x, int y) {
    const size_t i = static_cast<size_t>(y) * w + x;
    if (state[i] != kUnknown) return;
    state[i] = kQueued;
    queue.push({grad.mag[i], seq++, x, y});
  };

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (out.at(x, y) == 0) continue;
      for (int k = 0; k < 8; ++k) {
        const int nx = x + detail::kNeigh8X[k], ny = y + detail::kNeigh8Y[k];
        if (nx >= 0 && nx < w && ny >= 0 && ny < h) enqueue(nx, ny);
      }
    }

  while (!queue.empty()) {
    auto [mag, s, x, y] = queue.top();
    queue.pop();
    const size_t i = static_cast<size_t>(y) * w + x;
    int label = 0;
    bool conflict = false;
    for (int k = 0; k < 8; ++k) {
      const int nx = x + detail::kNeigh8X[k], ny = y + detail::kNeigh8Y[k];
      if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
      const size_t j = static_cast<size_t>(ny) * w + nx;
      if (state[j] != kDecided) continue;
      const int nl = out.labels[j];
      if (nl == 0) continue;  // watershed line does not propagate
      if (label == 0)
        label = nl;
      else if (label != nl)
        conflict = true;
    }
    out.labels[i] = conflict ? 0 : label;
    state[i] = kDecided;
    if (!conflict && label != 0)
      for (int k = 0; k < 8; ++k) {
        const int nx = x + detail::kNeigh8X[k], ny = y + detail::kNeigh8Y[k];
        if (nx >= 0 && nx < w && ny >= 0 && ny < h) enqueue(nx, ny);
      }
  }
  return out;
}

/// Among regions with area >= min_area, picks the one whose pixels have the
/// smallest mean Euclidean distance to the image center ((w-1)/2, (h-1)/2).
/// Ties go to the larger area, then the lower label.
inline BinaryMask select_brain_mask(const LabelMap& regions, size_t min_area) {
  struct Candidate {
    size_t area = 0;
    double dist_sum = 0.0;
  };
  std::map<int, Candidate> cands;
  const double cx = (regions.width - 1) / 2.0, cy = (regions.height - 1) / 2.0;
  for (int y = 0; y < regions.height; ++y)
    for (int x = 0; x < regions.width; ++x) {
      const int l = regions.at(x, y);
      if (l <= 0) continue;
      auto& c = cands[l];
      ++c.area;
      c.dist_sum += std::hypot(x - cx, y - cy);
    }

  int best_label = 0;
  double best_dist = 0.0;
  size_t best_area = 0;
  for (const auto& [label, c] : cands) {
    if (c.area < min_area) continue;
    const double mean_dist = c.dist_sum / static_cast<double>(c.area);
    const bool better =
        best_label == 0 || mean_dist < best_dist ||
        (mean_dist == best_dist &&
         (c.area > best_area || (c.area == best_area && label < best_label)));
    if (better) {
      best_label = label;
      best_dist = mean_dist;
      best_area = c.area;
    }
  }
  if (best_label == 0)
    throw NoCandidateRegion("no region with area >= " + std::to_string(min_area));

  BinaryMask out(regions.width, regions.height);
  for (size_t i = 0; i < out.bits.size(); ++i)
    out.bits[i] = regions.labels[i] == best_label ? 1 : 0;
  return out;
}

/// Full per-slice pipeline: normalize, mean-shift, gradient magnitude
/// (optionally box-smoothed), markers, flood, radial selection. The
/// sure-background region (label 1) is excluded from selection.
inline BinaryMask segment_slice(const ImageSlice& img, const WatershedParams& params) {
  if (img.empty()) throw ShapeMismatch("segment_slice: empty image");
  const ImageSlice norm = normalize(img);
  const ImageSlice smooth = mean_shift_filter(norm, params.spatial_radius,
                                              params.range_radius,
                                              params.mean_shift_max_iter);
  GradientField grad = gradient_magnitude(smooth);
  if (params.smooth_gradient)
    grad.mag = box_smooth3(grad.mag, grad.width, grad.height);
  const LabelMap markers = make_markers(smooth, params.threshold_level,
                                        params.fg_erosions, params.bg_dilations);
  const LabelMap flood = watershed_flood(grad, markers);
  LabelMap regions = flood;
  for (int& l : regions.labels)
    if (l == 1) l = 0;  // drop the background basin from candidacy
  const auto min_area =
      static_cast<size_t>(params.min_area_fraction * static_cast<float>(img.size()));
  BinaryMask mask = select_brain_mask(regions, std::max<size_t>(min_area, 1));

  // The flood leaves its ridge pixels unlabeled, which systematically
  // shaves a ring off the selected region. Reclaim ridge pixels that touch
  // the selection and are brighter than the normalized midpoint, i.e. look
  // like tissue rather than background.
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      if (flood.at(x, y) != 0 || mask.at(x, y) || smooth.at(x, y) < 0.5f) continue;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || nx >= mask.width || ny < 0 || ny >= mask.height) continue;
          if (regions.at(nx, ny) > 0 && mask.at(nx, ny)) {
            mask.at(x, y) = 1;
            dy = dx = 2;  // break both neighbor loops
            break;
          }
        }
      }
    }
  return mask;
}

}  // namespace skullstrip
