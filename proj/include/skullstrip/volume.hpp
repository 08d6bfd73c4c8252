#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "skullstrip/errors.hpp"
#include "skullstrip/image.hpp"

namespace skullstrip {

/// 3D/4D voxel grid with spatial metadata. Voxel data is row-major with x
/// fastest, then y, z, t. Always float after ingestion.
struct Volume {
  std::array<int, 4> dims = {0, 0, 0, 1};  // x, y, z, t (t == 1 for 3D)
  std::array<float, 4> voxel_size = {1.0f, 1.0f, 1.0f, 1.0f};  // mm per axis
  std::vector<float> data;
  std::vector<uint8_t> header_bytes;  // opaque source header, for round-trips

  size_t voxel_count() const {
    return static_cast<size_t>(dims[0]) * dims[1] * dims[2] * dims[3];
  }
  bool is_4d() const { return dims[3] > 1; }

  float at(int x, int y, int z, int t = 0) const {
    return data[((static_cast<size_t>(t) * dims[2] + z) * dims[1] + y) * dims[0] + x];
  }
  float& at(int x, int y, int z, int t = 0) {
    return data[((static_cast<size_t>(t) * dims[2] + z) * dims[1] + y) * dims[0] + x];
  }

  void validate() const {
    for (int i = 0; i < 4; ++i) {
      if (dims[i] < 1)
        throw ShapeMismatch("Volume dim " + std::to_string(i) + " is " +
                            std::to_string(dims[i]));
      if (!(voxel_size[i] > 0.0f))
        throw ShapeMismatch("Volume voxel_size " + std::to_string(i) +
                            " not positive");
    }
    if (voxel_count() != data.size())
      throw ShapeMismatch("Volume data length " + std::to_string(data.size()) +
                          " does not match dims product " +
                          std::to_string(voxel_count()));
  }
};

/// One ImageSlice per z plane (per (t,z) when 4D and no time index is given).
/// Slices keep axial order, z fastest within each time frame.
inline std::vector<ImageSlice> extract_slices(const Volume& vol,
                                              std::optional<int> time_index = {}) {
  vol.validate();
  const int nx = vol.dims[0], ny = vol.dims[1], nz = vol.dims[2], nt = vol.dims[3];
  int t0 = 0, t1 = nt;
  if (time_index) {
    if (*time_index < 0 || *time_index >= nt)
      throw IndexOutOfRange("time_index " + std::to_string(*time_index) +
                            " for volume with t=" + std::to_string(nt));
    t0 = *time_index;
    t1 = *time_index + 1;
  }
  std::vector<ImageSlice> slices;
  slices.reserve(static_cast<size_t>(t1 - t0) * nz);
  for (int t = t0; t < t1; ++t)
    for (int z = 0; z < nz; ++z) {
      ImageSlice s(nx, ny);
      for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) s.at(x, y) = vol.at(x, y, z, t);
      slices.push_back(std::move(s));
    }
  return slices;
}

/// Stack per-slice masks back into a 0/1 volume sharing the template's
/// geometry and header. Expects one mask per z slice.
inline Volume assemble_mask_volume(const std::vector<BinaryMask>& masks,
                                   const Volume& tmpl) {
  tmpl.validate();
  if (static_cast<int>(masks.size()) != tmpl.dims[2])
    throw ShapeMismatch("mask count " + std::to_string(masks.size()) +
                        " for template with " + std::to_string(tmpl.dims[2]) +
                        " slices");
  const int nx = tmpl.dims[0], ny = tmpl.dims[1], nz = tmpl.dims[2];
  for (const auto& m : masks)
    require_same_extents(m.width, m.height, nx, ny, "assemble_mask_volume");
  Volume out;
  out.dims = {nx, ny, nz, 1};
  out.voxel_size = tmpl.voxel_size;
  out.header_bytes = tmpl.header_bytes;
  out.data.resize(out.voxel_count());
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x)
        out.at(x, y, z) = static_cast<float>(masks[z].at(x, y));
  return out;
}

// ---------------------------------------------------------------------------
// Plain text volume format, for hand-written fixtures:
//   "P5-like: width height depth" on the first line, then whitespace
//   separated decimal voxel values, x fastest.

inline Volume read_plain_volume(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open " + path);
  std::string tag, like;
  in >> tag >> like;
  // header spellings "P5-like:" (one token) and "P5-like :" both accepted
  std::string header = tag + (like.empty() ? "" : " " + like);
  int w = 0, h = 0, d = 0;
  if (tag == "P5-like:") {
    w = std::stoi(like);
    in >> h >> d;
  } else if (tag == "P5-like" && like == ":") {
    in >> w >> h >> d;
  } else {
    throw MalformedHeader("plain volume header in " + path);
  }
  if (w < 1 || h < 1 || d < 1)
    throw MalformedHeader("non-positive extents in " + path);
  Volume vol;
  vol.dims = {w, h, d, 1};
  vol.data.resize(vol.voxel_count());
  for (auto& v : vol.data)
    if (!(in >> v)) throw TruncatedData("plain volume " + path);
  return vol;
}

inline void write_plain_volume(const Volume& vol, const std::string& path) {
  vol.validate();
  if (vol.is_4d()) throw ShapeMismatch("plain format is 3D only");
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot open " + path + " for writing");
  out << "P5-like: " << vol.dims[0] << " " << vol.dims[1] << " " << vol.dims[2]
      << "\n";
  for (size_t i = 0; i < vol.data.size(); ++i)
    out << vol.data[i] << ((i + 1) % vol.dims[0] == 0 ? "\n" : " ");
  if (!out) throw IoFailure("write failed: " + path);
}

}  // namespace skullstrip
