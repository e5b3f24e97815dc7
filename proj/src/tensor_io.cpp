#include "roiunc/tensor_io.hpp"

#include <png.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

namespace roiunc {

static_assert(std::endian::native == std::endian::little,
              "tensor container I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'R', 'U', 'N', 'C'};
constexpr std::uint16_t kFormatVersion = 1;
constexpr std::uint16_t kDtypeFloat32 = 1;
constexpr std::size_t kHeaderSize = 64;

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& msg) {
  throw std::runtime_error(path.string() + ": " + msg);
}

}  // namespace

Tensor3 read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  in.seekg(0, std::ios::end);
  const std::uint64_t file_size = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0);

  unsigned char header[kHeaderSize];
  if (file_size < kHeaderSize || !in.read(reinterpret_cast<char*>(header), kHeaderSize)) {
    fail(path, "malformed header: file shorter than 64-byte header");
  }
  if (std::memcmp(header, kMagic, 4) != 0) fail(path, "malformed header: bad magic");
  std::uint16_t version, dtype;
  std::uint64_t dims[3];
  std::memcpy(&version, header + 4, 2);
  std::memcpy(&dtype, header + 6, 2);
  std::memcpy(dims, header + 8, 24);
  if (version != kFormatVersion) fail(path, "malformed header: unsupported version");
  if (dtype != kDtypeFloat32) fail(path, "malformed header: unsupported dtype code");
  for (std::size_t i = 32; i < kHeaderSize; ++i) {
    if (header[i] != 0) fail(path, "malformed header: nonzero reserved bytes");
  }

  const std::uint64_t count = dims[0] * dims[1] * dims[2];
  if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0 ||
      count / dims[0] / dims[1] != dims[2]) {
    fail(path, "malformed header: bad shape");
  }
  if (file_size - kHeaderSize != count * sizeof(float)) fail(path, "payload length mismatch");

  Tensor3 t(static_cast<Eigen::Index>(dims[0]), static_cast<Eigen::Index>(dims[1]),
            static_cast<Eigen::Index>(dims[2]));
  if (!in.read(reinterpret_cast<char*>(t.data.data()),
               static_cast<std::streamsize>(count * sizeof(float)))) {
    fail(path, "payload length mismatch");
  }
  for (float v : t.data) {
    if (!std::isfinite(v)) fail(path, "non-finite value in payload");
  }
  return t;
}

void write_tensor(const Tensor3& t, const std::filesystem::path& path) {
  if (static_cast<std::uint64_t>(t.iters) * t.rows * t.cols != t.data.size()) {
    throw std::invalid_argument("write_tensor: shape does not match data length");
  }
  for (float v : t.data) {
    if (!std::isfinite(v)) throw std::invalid_argument("write_tensor: non-finite value");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(path, "cannot open for writing");

  unsigned char header[kHeaderSize] = {};
  std::memcpy(header, kMagic, 4);
  std::memcpy(header + 4, &kFormatVersion, 2);
  std::memcpy(header + 6, &kDtypeFloat32, 2);
  const std::uint64_t dims[3] = {static_cast<std::uint64_t>(t.iters),
                                 static_cast<std::uint64_t>(t.rows),
                                 static_cast<std::uint64_t>(t.cols)};
  std::memcpy(header + 8, dims, 24);
  out.write(reinterpret_cast<const char*>(header), kHeaderSize);
  out.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!out) fail(path, "write failed");
}

namespace {

struct PngReader {
  std::FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;

  ~PngReader() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

struct PngWriter {
  std::FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;

  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

// Reads an 8-bit PNG into interleaved rows. channels must be 1 or 3.
std::vector<std::vector<unsigned char>> read_png_rows(const std::filesystem::path& path,
                                                      int expected_channels,
                                                      Eigen::Index& rows, Eigen::Index& cols) {
  PngReader r;
  r.fp = std::fopen(path.string().c_str(), "rb");
  if (!r.fp) fail(path, "cannot open");

  unsigned char sig[8];
  if (std::fread(sig, 1, 8, r.fp) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    fail(path, "not a PNG file");
  }
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!r.png) fail(path, "png init failed");
  r.info = png_create_info_struct(r.png);
  if (!r.info) fail(path, "png init failed");
  if (setjmp(png_jmpbuf(r.png))) fail(path, "png decode error");

  png_init_io(r.png, r.fp);
  png_set_sig_bytes(r.png, 8);
  png_read_info(r.png, r.info);

  const png_uint_32 width = png_get_image_width(r.png, r.info);
  const png_uint_32 height = png_get_image_height(r.png, r.info);
  const int bit_depth = png_get_bit_depth(r.png, r.info);
  const int color_type = png_get_color_type(r.png, r.info);
  const int channels = png_get_channels(r.png, r.info);

  if (bit_depth != 8) fail(path, "unsupported bit depth (must be 8)");
  if (color_type == PNG_COLOR_TYPE_PALETTE) fail(path, "palette PNG not supported");
  if (channels != expected_channels) {
    fail(path, "wrong channel count (expected " + std::to_string(expected_channels) + ", got " +
                   std::to_string(channels) + ")");
  }

  rows = static_cast<Eigen::Index>(height);
  cols = static_cast<Eigen::Index>(width);
  std::vector<std::vector<unsigned char>> data(height);
  std::vector<png_bytep> row_ptrs(height);
  const std::size_t rowbytes = png_get_rowbytes(r.png, r.info);
  for (png_uint_32 i = 0; i < height; ++i) {
    data[i].resize(rowbytes);
    row_ptrs[i] = data[i].data();
  }
  png_read_image(r.png, row_ptrs.data());
  png_read_end(r.png, nullptr);
  return data;
}

void write_png_rows(const std::filesystem::path& path, Eigen::Index rows, Eigen::Index cols,
                    int color_type, const std::vector<std::vector<unsigned char>>& data) {
  PngWriter w;
  w.fp = std::fopen(path.string().c_str(), "wb");
  if (!w.fp) fail(path, "cannot open for writing");
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!w.png) fail(path, "png init failed");
  w.info = png_create_info_struct(w.png);
  if (!w.info) fail(path, "png init failed");
  if (setjmp(png_jmpbuf(w.png))) fail(path, "png encode error");

  png_init_io(w.png, w.fp);
  png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(cols), static_cast<png_uint_32>(rows), 8,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  std::vector<png_bytep> row_ptrs(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    row_ptrs[i] = const_cast<png_bytep>(data[static_cast<std::size_t>(i)].data());
  }
  png_write_image(w.png, row_ptrs.data());
  png_write_end(w.png, nullptr);
}

}  // namespace

Mask2 read_mask(const std::filesystem::path& path) {
  Eigen::Index rows = 0, cols = 0;
  const auto data = read_png_rows(path, 1, rows, cols);
  Mask2 mask(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      const unsigned char v = data[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      if (v == 0) {
        mask(i, j) = 0;
      } else if (v == 255) {
        mask(i, j) = 1;
      } else {
        fail(path, "non-binary mask value " + std::to_string(v) + " at (" + std::to_string(i) +
                       "," + std::to_string(j) + ")");
      }
    }
  }
  return mask;
}

void write_mask(const Mask2& mask, const std::filesystem::path& path) {
  require_binary(mask, "write_mask");
  std::vector<std::vector<unsigned char>> data(static_cast<std::size_t>(mask.rows()));
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    auto& row = data[static_cast<std::size_t>(i)];
    row.resize(static_cast<std::size_t>(mask.cols()));
    for (Eigen::Index j = 0; j < mask.cols(); ++j) row[static_cast<std::size_t>(j)] = mask(i, j) ? 255 : 0;
  }
  write_png_rows(path, mask.rows(), mask.cols(), PNG_COLOR_TYPE_GRAY, data);
}

RgbImage read_rgb(const std::filesystem::path& path) {
  Eigen::Index rows = 0, cols = 0;
  const auto data = read_png_rows(path, 3, rows, cols);
  RgbImage img{Image<std::uint8_t>(rows, cols), Image<std::uint8_t>(rows, cols),
               Image<std::uint8_t>(rows, cols)};
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = data[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < cols; ++j) {
      img.r(i, j) = row[3 * static_cast<std::size_t>(j)];
      img.g(i, j) = row[3 * static_cast<std::size_t>(j) + 1];
      img.b(i, j) = row[3 * static_cast<std::size_t>(j) + 2];
    }
  }
  return img;
}

void write_rgb(const RgbImage& img, const std::filesystem::path& path) {
  require_same_shape(img.r, img.g, "write_rgb");
  require_same_shape(img.r, img.b, "write_rgb");
  std::vector<std::vector<unsigned char>> data(static_cast<std::size_t>(img.rows()));
  for (Eigen::Index i = 0; i < img.rows(); ++i) {
    auto& row = data[static_cast<std::size_t>(i)];
    row.resize(3 * static_cast<std::size_t>(img.cols()));
    for (Eigen::Index j = 0; j < img.cols(); ++j) {
      row[3 * static_cast<std::size_t>(j)] = img.r(i, j);
      row[3 * static_cast<std::size_t>(j) + 1] = img.g(i, j);
      row[3 * static_cast<std::size_t>(j) + 2] = img.b(i, j);
    }
  }
  write_png_rows(path, img.rows(), img.cols(), PNG_COLOR_TYPE_RGB, data);
}

std::array<std::uint8_t, 3> heatmap_color(double value, double vmax) {
  if (!(vmax > 0.0)) throw std::invalid_argument("heatmap_color: vmax must be > 0");
  const double t = std::min(std::max(value / vmax, 0.0), 1.0);
  auto chan = [](double s) {
    return static_cast<std::uint8_t>(std::lround(255.0 * std::min(std::max(s, 0.0), 1.0)));
  };
  if (t <= 0.5) {
    const double s = t / 0.5;  // blue -> white
    return {chan(s), chan(s), 255};
  }
  const double s = (t - 0.5) / 0.5;  // white -> red
  return {255, chan(1.0 - s), chan(1.0 - s)};
}

void write_heatmap(const ImageD& values, const std::filesystem::path& path, double vmax) {
  if (!(vmax > 0.0)) throw std::invalid_argument("write_heatmap: vmax must be > 0");
  RgbImage img{Image<std::uint8_t>(values.rows(), values.cols()),
               Image<std::uint8_t>(values.rows(), values.cols()),
               Image<std::uint8_t>(values.rows(), values.cols())};
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      const auto [r, g, b] = heatmap_color(values(i, j), vmax);
      img.r(i, j) = r;
      img.g(i, j) = g;
      img.b(i, j) = b;
    }
  }
  write_rgb(img, path);
}

Manifest read_manifest(const std::filesystem::path& path, bool check_files) {
  std::ifstream in(path);
  if (!in) fail(path, "cannot open");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(path, std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_array()) fail(path, "manifest must be a JSON array");

  const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };

  Manifest manifest;
  std::set<std::string> seen;
  for (const auto& item : doc) {
    if (!item.is_object()) fail(path, "manifest entries must be objects");
    ManifestEntry e;
    try {
      e.image_id = item.at("image_id").get<std::string>();
      e.stack_path = resolve(item.at("stack_path").get<std::string>());
      e.gt_path = resolve(item.at("gt_path").get<std::string>());
      e.has_tumor = item.at("has_tumor").get<bool>();
      if (item.contains("rgb_path") && !item["rgb_path"].is_null()) {
        e.rgb_path = resolve(item["rgb_path"].get<std::string>());
      }
    } catch (const nlohmann::json::exception& ex) {
      fail(path, std::string("bad manifest entry: ") + ex.what());
    }
    if (!seen.insert(e.image_id).second) fail(path, "duplicate image_id '" + e.image_id + "'");
    manifest.entries.push_back(std::move(e));
  }

  if (check_files) {
    for (const auto& e : manifest.entries) {
      for (const auto& p : {e.stack_path, e.gt_path}) {
        if (!std::filesystem::exists(p)) fail(path, "referenced file missing: " + p.string());
      }
      if (e.rgb_path && !std::filesystem::exists(*e.rgb_path)) {
        fail(path, "referenced file missing: " + e.rgb_path->string());
      }
    }
  }
  return manifest;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  // Store paths relative to the manifest itself where possible, so a cohort
  // directory can be moved (or regenerated elsewhere) without rewriting it.
  const auto base = std::filesystem::absolute(
      path.has_parent_path() ? path.parent_path() : std::filesystem::path("."))
      .lexically_normal();
  auto relativize = [&](const std::filesystem::path& p) {
    const auto rel =
        std::filesystem::absolute(p).lexically_normal().lexically_relative(base);
    return rel.empty() ? p.generic_string() : rel.generic_string();
  };

  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& e : manifest.entries) {
    nlohmann::ordered_json item;
    item["image_id"] = e.image_id;
    item["stack_path"] = relativize(e.stack_path);
    if (e.rgb_path) item["rgb_path"] = relativize(*e.rgb_path);
    item["gt_path"] = relativize(e.gt_path);
    item["has_tumor"] = e.has_tumor;
    doc.push_back(std::move(item));
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(path, "cannot open for writing");
  out << doc.dump(2) << "\n";
}

}  // namespace roiunc
