#pragma once

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "skullstrip/image.hpp"
#include "skullstrip/volume.hpp"

namespace testutil {

using skullstrip::BinaryMask;
using skullstrip::ImageSlice;

/// Synthetic brain phantom: bright centered ellipse plus an off-center
/// bright bar (muscle stand-in) on a dark, lightly noisy background.
/// Edges are softened over ~1 pixel so gradients behave like real slices.
struct Phantom {
  ImageSlice image;
  BinaryMask truth;  // the analytic ellipse
};

inline Phantom make_phantom(int width, int height, uint32_t seed,
                            bool with_distractor = true) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double cx = (width - 1) / 2.0 + (uni(rng) * 4.0 - 2.0);
  const double cy = (height - 1) / 2.0 + (uni(rng) * 4.0 - 2.0);
  const double rx = width * (0.18 + 0.08 * uni(rng));
  const double ry = height * (0.14 + 0.08 * uni(rng));

  // distractor bar hugging one side
  const bool left = uni(rng) < 0.5;
  const double bar_x0 = left ? 1.0 : width - 1.0 - width * 0.08;
  const double bar_x1 = bar_x0 + width * 0.08;
  const double bar_y0 = height * 0.25;
  const double bar_y1 = height * 0.75;

  std::normal_distribution<float> noise(0.0f, 0.01f);
  Phantom ph;
  ph.image = ImageSlice(width, height);
  ph.truth = BinaryMask(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double exs = (x - cx) / rx, eys = (y - cy) / ry;
      const double r = std::sqrt(exs * exs + eys * eys);
      double v = 0.05;
      // soft edge: fade over roughly one pixel of radial distance
      const double edge = 1.0 / std::min(rx, ry);
      if (r <= 1.0 - edge)
        v = 0.9;
      else if (r < 1.0 + edge)
        v = 0.05 + (0.9 - 0.05) * (1.0 + edge - r) / (2.0 * edge);
      if (with_distractor && x >= bar_x0 && x <= bar_x1 && y >= bar_y0 && y <= bar_y1)
        v = std::max(v, 0.7);
      ph.image.at(x, y) = static_cast<float>(v) + noise(rng);
      ph.truth.at(x, y) = r <= 1.0 ? 1 : 0;
    }
  return ph;
}

inline double dice(const BinaryMask& a, const BinaryMask& b) {
  size_t inter = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.bits.size(); ++i) {
    inter += a.bits[i] && b.bits[i];
    na += a.bits[i];
    nb += b.bits[i];
  }
  return na + nb == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / (na + nb);
}

/// Fresh scratch directory under the system temp root.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() /
             ("skullstrip_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string cli_path() {
  const char* env = std::getenv("SKULLSTRIP_CLI");
  return env ? env : "./skullstrip";
}

inline skullstrip::Volume random_volume(int nx, int ny, int nz, uint32_t seed) {
  skullstrip::Volume v;
  v.dims = {nx, ny, nz, 1};
  v.data.resize(v.voxel_count());
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> uni(0.0f, 1.0f);
  for (auto& x : v.data) x = uni(rng);
  return v;
}

}  // namespace testutil
