#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "roiunc/core.hpp"

namespace roiunc {

// Stack of per-iteration image planes: shape (iters, rows, cols), float32,
// row-major within a plane, iteration-major across planes.
struct Tensor3 {
  Eigen::Index iters = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::vector<float> data;

  Tensor3() = default;
  Tensor3(Eigen::Index t, Eigen::Index h, Eigen::Index w)
      : iters(t), rows(h), cols(w), data(static_cast<std::size_t>(t) * h * w, 0.0f) {}

  std::size_t size() const { return data.size(); }

  Eigen::Map<const ImageF> slice(Eigen::Index t) const {
    return {data.data() + static_cast<std::size_t>(t) * rows * cols, rows, cols};
  }
  Eigen::Map<ImageF> slice(Eigen::Index t) {
    return {data.data() + static_cast<std::size_t>(t) * rows * cols, rows, cols};
  }

  float at(Eigen::Index t, Eigen::Index i, Eigen::Index j) const {
    return data[(static_cast<std::size_t>(t) * rows + i) * cols + j];
  }
  float& at(Eigen::Index t, Eigen::Index i, Eigen::Index j) {
    return data[(static_cast<std::size_t>(t) * rows + i) * cols + j];
  }
};

// Tensor container format (".runc"): a 64-byte fixed header followed by the
// raw little-endian float32 payload.
//   offset  size  field
//   0       4     magic "RUNC"
//   4       2     format version, u16 LE (currently 1)
//   6       2     dtype code, u16 LE (1 = float32; no other codes defined)
//   8       8     dim 0 (iterations), u64 LE
//   16      8     dim 1 (rows), u64 LE
//   24      8     dim 2 (cols), u64 LE
//   32      32    reserved, must be zero
Tensor3 read_tensor(const std::filesystem::path& path);
void write_tensor(const Tensor3& t, const std::filesystem::path& path);

// Binary masks travel as 8-bit single-channel grayscale PNG holding only the
// values 0 and 255. Anything else is rejected.
Mask2 read_mask(const std::filesystem::path& path);
void write_mask(const Mask2& mask, const std::filesystem::path& path);

// 8-bit 3-channel RGB PNG.
RgbImage read_rgb(const std::filesystem::path& path);
void write_rgb(const RgbImage& img, const std::filesystem::path& path);

// Diverging blue -> white -> red ramp: 0 maps to pure blue, vmax/2 to white,
// >= vmax to pure red, linear in between.
std::array<std::uint8_t, 3> heatmap_color(double value, double vmax);
void write_heatmap(const ImageD& values, const std::filesystem::path& path, double vmax);

struct ManifestEntry {
  std::string image_id;
  std::filesystem::path stack_path;
  std::optional<std::filesystem::path> rgb_path;
  std::filesystem::path gt_path;
  bool has_tumor = false;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
};

// Manifest is a UTF-8 JSON array of entry objects; relative paths are
// resolved against the manifest's directory. With check_files set, missing
// referenced files are a load error; the CLI instead surfaces them per image.
Manifest read_manifest(const std::filesystem::path& path, bool check_files = true);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

}  // namespace roiunc
