#pragma once

#include <cstdint>
#include <vector>

#include "skullstrip/errors.hpp"

namespace skullstrip {

/// 2D grayscale image, row-major float pixels. The unit of per-slice
/// processing throughout the pipeline.
struct ImageSlice {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  ImageSlice() = default;
  ImageSlice(int w, int h, float fill = 0.0f)
      : width(w), height(h), pixels(static_cast<size_t>(w) * h, fill) {}

  float& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
  float at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
  size_t size() const { return pixels.size(); }
  bool empty() const { return pixels.empty(); }

  bool operator==(const ImageSlice&) const = default;
};

/// Hard per-pixel brain label, values exactly 0 or 1.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int w, int h, uint8_t fill = 0)
      : width(w), height(h), bits(static_cast<size_t>(w) * h, fill) {}

  uint8_t& at(int x, int y) { return bits[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int x, int y) const { return bits[static_cast<size_t>(y) * width + x]; }
  size_t size() const { return bits.size(); }

  size_t popcount() const {
    size_t n = 0;
    for (uint8_t b : bits) n += b;
    return n;
  }

  bool operator==(const BinaryMask&) const = default;
};

/// Per-pixel brain probability in [0,1].
struct SoftMask {
  int width = 0;
  int height = 0;
  std::vector<float> probs;

  SoftMask() = default;
  SoftMask(int w, int h, float fill = 0.0f)
      : width(w), height(h), probs(static_cast<size_t>(w) * h, fill) {}

  float& at(int x, int y) { return probs[static_cast<size_t>(y) * width + x]; }
  float at(int x, int y) const { return probs[static_cast<size_t>(y) * width + x]; }
  size_t size() const { return probs.size(); }
};

inline void require_same_extents(int wa, int ha, int wb, int hb, const char* what) {
  if (wa != wb || ha != hb)
    throw ShapeMismatch(std::string(what) + ": " + std::to_string(wa) + "x" +
                        std::to_string(ha) + " vs " + std::to_string(wb) + "x" +
                        std::to_string(hb));
}

}  // namespace skullstrip
