#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>

#include "roiunc/regions.hpp"
#include "roiunc/rng.hpp"

using namespace roiunc;

namespace {

Mask2 random_mask(Eigen::Index h, Eigen::Index w, SequentialRng& rng) {
  Mask2 m(h, w);
  for (Eigen::Index i = 0; i < h; ++i) {
    for (Eigen::Index j = 0; j < w; ++j) m(i, j) = static_cast<std::uint8_t>(rng.below(2));
  }
  return m;
}

ImageD random_map(Eigen::Index h, Eigen::Index w, SequentialRng& rng) {
  ImageD m(h, w);
  for (Eigen::Index i = 0; i < h; ++i) {
    for (Eigen::Index j = 0; j < w; ++j) m(i, j) = rng.uniform01();
  }
  return m;
}

}  // namespace

TEST_CASE("tissue binarization thresholds on the minimum channel") {
  RgbImage rgb{Image<std::uint8_t>(1, 4), Image<std::uint8_t>(1, 4), Image<std::uint8_t>(1, 4)};
  // near-white background
  rgb.r(0, 0) = 245, rgb.g(0, 0) = 245, rgb.b(0, 0) = 245;
  // exactly at the threshold: still background (>= 220)
  rgb.r(0, 1) = 220, rgb.g(0, 1) = 220, rgb.b(0, 1) = 220;
  // one channel below: tissue
  rgb.r(0, 2) = 219, rgb.g(0, 2) = 255, rgb.b(0, 2) = 255;
  // typical pink tissue
  rgb.r(0, 3) = 230, rgb.g(0, 3) = 150, rgb.b(0, 3) = 180;

  const Mask2 tissue = binarize_tissue(rgb);
  CHECK(tissue(0, 0) == 0);
  CHECK(tissue(0, 1) == 0);
  CHECK(tissue(0, 2) == 1);
  CHECK(tissue(0, 3) == 1);

  // A stricter threshold flips the 219 pixel to background.
  CHECK(binarize_tissue(rgb, 219)(0, 2) == 0);
}

TEST_CASE("derived regions partition the image") {
  SequentialRng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Mask2 tissue = random_mask(16, 16, rng);
    const Mask2 gt = random_mask(16, 16, rng);
    const RegionMasks masks = derive_regions(tissue, gt);

    for (Eigen::Index i = 0; i < 16; ++i) {
      for (Eigen::Index j = 0; j < 16; ++j) {
        const int total = masks.tumor(i, j) + masks.non_tumor(i, j) + masks.non_tissue(i, j);
        CHECK(total == 1);  // disjoint and covering
        CHECK(masks.tissue(i, j) == 1 - masks.non_tissue(i, j));
      }
    }
    // Ground truth is authoritative for tumor.
    CHECK((masks.tumor == gt).all());
  }
}

TEST_CASE("tumor outside the tissue mask expands tissue") {
  Mask2 tissue = Mask2::Zero(2, 2);
  tissue(0, 0) = 1;
  Mask2 gt = Mask2::Zero(2, 2);
  gt(1, 1) = 1;  // tumor-labeled pixel the stain threshold called background

  const RegionMasks masks = derive_regions(tissue, gt);
  CHECK(masks.tumor(1, 1) == 1);
  CHECK(masks.tissue(1, 1) == 1);
  CHECK(masks.non_tissue(1, 1) == 0);
  CHECK(masks.non_tumor(1, 1) == 0);
  CHECK(masks.non_tumor(0, 0) == 1);  // plain tissue stays non-tumor
}

TEST_CASE("region means follow the Hadamard-mask semantics") {
  ImageD map(2, 2);
  map << 0.1, 0.2, 0.3, 0.4;
  Mask2 region = Mask2::Zero(2, 2);
  region(0, 0) = 1;
  region(1, 1) = 1;

  const RegionValue rp = region_value(map, region, DenomConvention::kRegionPixels);
  CHECK(rp.value == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(rp.pixel_count == 2);
  CHECK_FALSE(rp.empty);

  const RegionValue ap = region_value(map, region, DenomConvention::kAllPixels);
  CHECK(ap.value == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(ap.pixel_count == 2);

  const RegionValue none = region_value(map, Mask2::Zero(2, 2), DenomConvention::kRegionPixels);
  CHECK(none.value == 0.0);
  CHECK(none.pixel_count == 0);
  CHECK(none.empty);
}

TEST_CASE("all-pixels region means decompose the overall mean") {
  SequentialRng rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const Mask2 tissue = random_mask(32, 32, rng);
    const Mask2 gt = random_mask(32, 32, rng);
    const ImageD map = random_map(32, 32, rng);
    const RegionMasks masks = derive_regions(tissue, gt);

    const RegionUncertainties ru =
        compute_region_uncertainties(map, masks, DenomConvention::kAllPixels);
    const double sum = ru.tumor.value + ru.non_tumor.value + ru.non_tissue.value;
    CHECK(sum == doctest::Approx(ru.overall.value).epsilon(1e-12));
  }
}

TEST_CASE("denominator convention names") {
  CHECK(to_string(DenomConvention::kRegionPixels) == "region_pixels");
  CHECK(to_string(DenomConvention::kAllPixels) == "all_pixels");
  CHECK(denom_from_string("region") == DenomConvention::kRegionPixels);
  CHECK(denom_from_string("region_pixels") == DenomConvention::kRegionPixels);
  CHECK(denom_from_string("all") == DenomConvention::kAllPixels);
  CHECK(denom_from_string("all_pixels") == DenomConvention::kAllPixels);
  CHECK_THROWS_AS(denom_from_string("bogus"), std::invalid_argument);
}

TEST_CASE("shape mismatches are rejected") {
  CHECK_THROWS_AS(derive_regions(Mask2::Zero(2, 2), Mask2::Zero(3, 3)), std::invalid_argument);
  CHECK_THROWS_AS(region_value(ImageD::Zero(2, 2), Mask2::Zero(2, 3),
                               DenomConvention::kRegionPixels),
                  std::invalid_argument);
}
