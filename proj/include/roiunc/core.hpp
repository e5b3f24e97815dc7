#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <span>
#include <stdexcept>
#include <string>

namespace roiunc {

// Dense row-major image plane. Row-major matches the on-disk layouts used
// throughout (tensor container payloads, PNG rows).
template <typename Scalar>
using Image = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using ImageF = Image<float>;
using ImageD = Image<double>;

// Binary mask, values strictly in {0, 1}.
using Mask2 = Image<std::uint8_t>;

// 8-bit RGB image as three planes.
struct RgbImage {
  Image<std::uint8_t> r, g, b;

  Eigen::Index rows() const { return r.rows(); }
  Eigen::Index cols() const { return r.cols(); }
};

inline bool same_shape(Eigen::Index r1, Eigen::Index c1, Eigen::Index r2, Eigen::Index c2) {
  return r1 == r2 && c1 == c2;
}

template <typename A, typename B>
void require_same_shape(const A& a, const B& b, const std::string& what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(what + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                                "x" + std::to_string(b.cols()) + ")");
  }
}

inline void require_binary(const Mask2& m, const std::string& what) {
  if (((m != 0) && (m != 1)).any()) {
    throw std::invalid_argument(what + ": mask values must be 0 or 1");
  }
}

// Compensated (Kahan) summation. Statistical reductions over pixel grids go
// through this so that partition identities hold to ~1e-13 even at megapixel
// counts, independent of image size.
class KahanSum {
 public:
  void add(double x) {
    const double y = x - comp_;
    const double t = sum_ + y;
    comp_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double kahan_sum(std::span<const double> xs) {
  KahanSum acc;
  for (double x : xs) acc.add(x);
  return acc.value();
}

inline double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

// Full-precision decimal rendering for CSV/report output. 17 significant
// digits round-trip any IEEE double exactly.
inline std::string format_g17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return std::string(buf);
}

}  // namespace roiunc
