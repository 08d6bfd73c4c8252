#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "skullstrip/errors.hpp"
#include "skullstrip/volume.hpp"

namespace skullstrip {

// Minimal uncompressed single-file NIfTI-1 reader/writer. Little-endian
// only, datatypes uint8/int16/float32, no extensions. Orientation and
// affine header fields are carried through untouched.

namespace nifti {

constexpr int32_t kHeaderSize = 348;
constexpr size_t kDefaultVoxOffset = 352;  // header + 4 extension-flag bytes

constexpr int16_t kDtUint8 = 2;
constexpr int16_t kDtInt16 = 4;
constexpr int16_t kDtFloat32 = 16;

// byte offsets within the 348-byte header
constexpr size_t kOffSizeofHdr = 0;
constexpr size_t kOffDim = 40;        // int16[8]
constexpr size_t kOffDatatype = 70;   // int16
constexpr size_t kOffBitpix = 72;     // int16
constexpr size_t kOffPixdim = 76;     // float[8]
constexpr size_t kOffVoxOffset = 108; // float
constexpr size_t kOffSclSlope = 112;  // float
constexpr size_t kOffSclInter = 116;  // float
constexpr size_t kOffMagic = 344;     // char[4] "n+1\0"

template <typename T>
T get(const std::vector<uint8_t>& buf, size_t off) {
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  return v;
}

template <typename T>
void put(std::vector<uint8_t>& buf, size_t off, T v) {
  std::memcpy(buf.data() + off, &v, sizeof(T));
}

}  // namespace nifti

inline Volume read_nifti(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + path);
  std::vector<uint8_t> header(nifti::kHeaderSize);
  in.read(reinterpret_cast<char*>(header.data()), nifti::kHeaderSize);
  if (in.gcount() != nifti::kHeaderSize)
    throw MalformedHeader("file shorter than the 348-byte header: " + path);

  if (nifti::get<int32_t>(header, nifti::kOffSizeofHdr) != nifti::kHeaderSize)
    throw MalformedHeader("sizeof_hdr != 348 in " + path);
  const char* magic = reinterpret_cast<const char*>(header.data() + nifti::kOffMagic);
  if (std::memcmp(magic, "n+1\0", 4) != 0)
    throw MalformedHeader("bad magic in " + path);

  int16_t ndim = nifti::get<int16_t>(header, nifti::kOffDim);
  if (ndim < 1 || ndim > 7) throw MalformedHeader("dim[0] out of range in " + path);
  Volume vol;
  vol.dims = {1, 1, 1, 1};
  for (int i = 0; i < 7; ++i) {
    int16_t d = nifti::get<int16_t>(header, nifti::kOffDim + 2 * (i + 1));
    if (i >= ndim) d = 1;
    if (d < 1) throw MalformedHeader("dim[" + std::to_string(i + 1) + "] < 1 in " + path);
    if (i < 4) {
      vol.dims[i] = d;
    } else if (d > 1) {
      throw MalformedHeader("more than 4 dimensions in " + path);
    }
  }
  for (int i = 0; i < 4; ++i) {
    float p = nifti::get<float>(header, nifti::kOffPixdim + 4 * (i + 1));
    vol.voxel_size[i] = p > 0.0f ? p : 1.0f;
  }

  const int16_t datatype = nifti::get<int16_t>(header, nifti::kOffDatatype);
  size_t elem_size;
  switch (datatype) {
    case nifti::kDtUint8: elem_size = 1; break;
    case nifti::kDtInt16: elem_size = 2; break;
    case nifti::kDtFloat32: elem_size = 4; break;
    default:
      throw UnsupportedDatatype("datatype code " + std::to_string(datatype) +
                                " in " + path);
  }

  float vox_offset_f = nifti::get<float>(header, nifti::kOffVoxOffset);
  if (vox_offset_f < nifti::kHeaderSize)
    throw MalformedHeader("vox_offset < 348 in " + path);
  const auto vox_offset = static_cast<size_t>(vox_offset_f);

  const size_t n = vol.voxel_count();
  std::vector<uint8_t> raw(n * elem_size);
  in.seekg(static_cast<std::streamoff>(vox_offset));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<size_t>(in.gcount()) != raw.size())
    throw TruncatedData("expected " + std::to_string(raw.size()) +
                        " payload bytes in " + path);

  float slope = nifti::get<float>(header, nifti::kOffSclSlope);
  float inter = nifti::get<float>(header, nifti::kOffSclInter);
  const bool scale = slope != 0.0f;

  vol.data.resize(n);
  for (size_t i = 0; i < n; ++i) {
    float v;
    switch (datatype) {
      case nifti::kDtUint8:
        v = static_cast<float>(raw[i]);
        break;
      case nifti::kDtInt16: {
        int16_t s;
        std::memcpy(&s, raw.data() + 2 * i, 2);
        v = static_cast<float>(s);
        break;
      }
      default: {
        std::memcpy(&v, raw.data() + 4 * i, 4);
        break;
      }
    }
    vol.data[i] = scale ? slope * v + inter : v;
  }
  vol.header_bytes = std::move(header);
  return vol;
}

/// Emits a float32 single-file .nii. Source header fields are carried over
/// verbatim when present; geometry, datatype and scaling fields are rewritten
/// so that a reread reproduces the Volume exactly.
inline void write_nifti(const Volume& vol, const std::string& path) {
  vol.validate();
  std::vector<uint8_t> header(nifti::kHeaderSize, 0);
  if (vol.header_bytes.size() == nifti::kHeaderSize) header = vol.header_bytes;

  nifti::put<int32_t>(header, nifti::kOffSizeofHdr, nifti::kHeaderSize);
  int16_t ndim = vol.is_4d() ? 4 : 3;
  nifti::put<int16_t>(header, nifti::kOffDim, ndim);
  for (int i = 0; i < 7; ++i)
    nifti::put<int16_t>(header, nifti::kOffDim + 2 * (i + 1),
                        i < 4 ? static_cast<int16_t>(vol.dims[i]) : int16_t{1});
  for (int i = 0; i < 4; ++i)
    nifti::put<float>(header, nifti::kOffPixdim + 4 * (i + 1), vol.voxel_size[i]);
  nifti::put<int16_t>(header, nifti::kOffDatatype, nifti::kDtFloat32);
  nifti::put<int16_t>(header, nifti::kOffBitpix, 32);
  nifti::put<float>(header, nifti::kOffVoxOffset,
                    static_cast<float>(nifti::kDefaultVoxOffset));
  nifti::put<float>(header, nifti::kOffSclSlope, 0.0f);  // 0 means "no scaling"
  nifti::put<float>(header, nifti::kOffSclInter, 0.0f);
  std::memcpy(header.data() + nifti::kOffMagic, "n+1\0", 4);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(header.data()), nifti::kHeaderSize);
  const char pad[4] = {0, 0, 0, 0};
  out.write(pad, 4);
  out.write(reinterpret_cast<const char*>(vol.data.data()),
            static_cast<std::streamsize>(vol.data.size() * sizeof(float)));
  if (!out) throw IoFailure("write failed: " + path);
}

/// Reads either format by extension: .nii binary, anything else plain text.
inline Volume read_volume(const std::string& path) {
  if (std::filesystem::path(path).extension() == ".nii") return read_nifti(path);
  return read_plain_volume(path);
}

inline void write_volume(const Volume& vol, const std::string& path) {
  if (std::filesystem::path(path).extension() == ".nii")
    write_nifti(vol, path);
  else
    write_plain_volume(vol, path);
}

}  // namespace skullstrip
