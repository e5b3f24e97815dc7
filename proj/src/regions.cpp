#include "roiunc/regions.hpp"

namespace roiunc {

std::string to_string(DenomConvention c) {
  return c == DenomConvention::kRegionPixels ? "region_pixels" : "all_pixels";
}

DenomConvention denom_from_string(const std::string& s) {
  if (s == "region_pixels" || s == "region") return DenomConvention::kRegionPixels;
  if (s == "all_pixels" || s == "all") return DenomConvention::kAllPixels;
  throw std::invalid_argument("unknown denominator convention '" + s + "'");
}

Mask2 binarize_tissue(const RgbImage& rgb, int white_threshold) {
  require_same_shape(rgb.r, rgb.g, "binarize_tissue");
  require_same_shape(rgb.r, rgb.b, "binarize_tissue");
  Mask2 tissue(rgb.rows(), rgb.cols());
  for (Eigen::Index i = 0; i < rgb.rows(); ++i) {
    for (Eigen::Index j = 0; j < rgb.cols(); ++j) {
      const int lowest = std::min({static_cast<int>(rgb.r(i, j)), static_cast<int>(rgb.g(i, j)),
                                   static_cast<int>(rgb.b(i, j))});
      tissue(i, j) = lowest >= white_threshold ? 0 : 1;
    }
  }
  return tissue;
}

RegionMasks derive_regions(const Mask2& tissue, const Mask2& gt_tumor) {
  require_same_shape(tissue, gt_tumor, "derive_regions");
  require_binary(tissue, "derive_regions");
  require_binary(gt_tumor, "derive_regions");

  RegionMasks masks;
  masks.tumor = gt_tumor;
  masks.tissue = (tissue.cast<int>() + gt_tumor.cast<int>() > 0).cast<std::uint8_t>();
  masks.non_tumor = (masks.tissue == 1 && gt_tumor == 0).cast<std::uint8_t>();
  masks.non_tissue = (masks.tissue == 0).cast<std::uint8_t>();
  return masks;
}

RegionValue region_value(const ImageD& map, const Mask2& region, DenomConvention denom) {
  require_same_shape(map, region, "region_uncertainty");
  require_binary(region, "region_uncertainty");

  KahanSum acc;
  std::uint64_t count = 0;
  for (Eigen::Index i = 0; i < map.rows(); ++i) {
    for (Eigen::Index j = 0; j < map.cols(); ++j) {
      acc.add(static_cast<double>(region(i, j)) * map(i, j));
      count += region(i, j);
    }
  }

  RegionValue rv;
  rv.pixel_count = count;
  rv.empty = count == 0;
  if (denom == DenomConvention::kRegionPixels) {
    rv.value = count == 0 ? 0.0 : acc.value() / static_cast<double>(count);
  } else {
    const auto total = static_cast<double>(map.size());
    rv.value = total == 0.0 ? 0.0 : acc.value() / total;
  }
  return rv;
}

double region_uncertainty(const ImageD& map, const Mask2& region, DenomConvention denom) {
  return region_value(map, region, denom).value;
}

RegionUncertainties compute_region_uncertainties(const ImageD& map, const RegionMasks& masks,
                                                 DenomConvention denom) {
  const Mask2 all = Mask2::Constant(map.rows(), map.cols(), 1);
  RegionUncertainties unc;
  unc.overall = region_value(map, all, denom);
  unc.tumor = region_value(map, masks.tumor, denom);
  unc.non_tumor = region_value(map, masks.non_tumor, denom);
  unc.non_tissue = region_value(map, masks.non_tissue, denom);
  return unc;
}

}  // namespace roiunc
