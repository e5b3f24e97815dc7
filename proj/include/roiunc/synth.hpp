#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "roiunc/mc_agg.hpp"
#include "roiunc/regions.hpp"
#include "roiunc/tensor_io.hpp"

namespace roiunc {

// Base logit magnitude for phantom predictions. sigmoid(4) = 0.982 clears the
// 0.95 aggregation threshold, so noiseless phantoms segment perfectly.
inline constexpr double kPhantomBaseLogit = 4.0;

struct Disk {
  double center_row = 0.0;
  double center_col = 0.0;
  double radius = 0.0;
};

struct Ellipse {
  double center_row = 0.0;
  double center_col = 0.0;
  double axis_row = 0.0;
  double axis_col = 0.0;
};

// Deterministic synthetic phantom: an elliptical tissue island on a
// near-white background with disk-shaped tumor blobs, plus an MC stack whose
// per-iteration logits carry region-specific Gaussian noise. Noise draws are
// keyed by (seed, image id, pixel index, iteration), so generation is
// reproducible and order-independent.
struct PhantomSpec {
  std::uint64_t seed = 0;
  Eigen::Index rows = 256;
  Eigen::Index cols = 256;
  Ellipse tissue_ellipse{128.0, 128.0, 100.0, 112.0};
  std::vector<Disk> tumor_blobs{{110.0, 100.0, 24.0}, {160.0, 152.0, 20.0}};
  double sigma_tumor = 0.0;
  double sigma_non_tumor = 0.0;
  double sigma_non_tissue = 0.0;
  int alpha = 50;
  int boundary_band = 2;
};

struct PhantomTruth {
  RgbImage rgb;
  Mask2 gt;
  RegionMasks true_regions;
  ImageD expected_logit_field;
};

struct Phantom {
  PhantomTruth truth;
  PredictionStack stack;
};

Phantom generate_phantom(const PhantomSpec& spec, std::string_view image_id = "phantom");

struct CohortTruthRow {
  std::string image_id;
  double sigma_tumor = 0.0;
  double sigma_non_tumor = 0.0;
  double sigma_non_tissue = 0.0;
  double true_dice_after_aggregation = 0.0;
};

struct CohortOutput {
  Manifest manifest;
  std::vector<CohortTruthRow> truth;
};

// One phantom per sweep multiplier (all three sigmas scaled). Writes the
// stacks, RGB renders, ground-truth masks, manifest.json and truth.csv into
// out_dir and returns what it wrote.
CohortOutput generate_cohort(const PhantomSpec& base, int n_images,
                             std::span<const double> dice_noise_sweep,
                             const std::filesystem::path& out_dir);

}  // namespace roiunc
