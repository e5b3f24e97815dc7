#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "roiunc/core.hpp"

namespace roiunc {

// Tumor / non-tumor-tissue / non-tissue partition of one image. The three
// region masks are pairwise disjoint and cover the full grid; tumor is always
// contained in tissue.
struct RegionMasks {
  Mask2 tissue;      // tumor + non-tumor tissue
  Mask2 tumor;       // the ground-truth tumor mask
  Mask2 non_tumor;   // tissue minus tumor
  Mask2 non_tissue;  // complement of tissue
};

enum class DenomConvention {
  kRegionPixels,  // masked sum / region pixel count (0 for empty regions)
  kAllPixels,     // masked sum / (H*W); region values then sum to the overall mean
};

std::string to_string(DenomConvention c);
DenomConvention denom_from_string(const std::string& s);

struct RegionValue {
  double value = 0.0;
  std::uint64_t pixel_count = 0;
  bool empty = false;
};

// Mean uncertainties for the overall image and the three regions:
// x0 = overall, x1 = tumor, x2 = non-tumor tissue, x3 = non-tissue.
struct RegionUncertainties {
  RegionValue overall, tumor, non_tumor, non_tissue;
};

// Tissue/background separation of an H&E-like RGB image: a pixel is
// background (0) iff min(R,G,B) >= white_threshold, i.e. near-white slide
// glass; everything else counts as tissue (1).
Mask2 binarize_tissue(const RgbImage& rgb, int white_threshold = 220);

// Builds the three-region partition from the binarized tissue mask and the
// ground-truth tumor mask. Ground truth is authoritative: tumor pixels that
// fall outside the tissue mask are pulled into tissue rather than dropped.
RegionMasks derive_regions(const Mask2& tissue, const Mask2& gt_tumor);

// Mean of the Hadamard-masked map under the chosen denominator. An empty
// region yields 0.
double region_uncertainty(const ImageD& map, const Mask2& region,
                          DenomConvention denom = DenomConvention::kRegionPixels);
RegionValue region_value(const ImageD& map, const Mask2& region, DenomConvention denom);

RegionUncertainties compute_region_uncertainties(const ImageD& map, const RegionMasks& masks,
                                                 DenomConvention denom);

}  // namespace roiunc
