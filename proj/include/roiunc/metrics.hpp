#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "roiunc/core.hpp"

namespace roiunc {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
};

// Pixelwise confusion counts: positives are tumor pixels in the ground truth.
ConfusionCounts confusion(const Mask2& pred, const Mask2& gt);

// 2*tp / (2*tp + fp + fn); 1.0 when both masks are empty.
double dice(const ConfusionCounts& c);

// (tp/(tp+fn), fp/(fp+tn)), each 0 when its denominator is 0.
std::pair<double, double> tpr_fpr(const ConfusionCounts& c);

// Mann-Whitney AUROC: the probability a uniformly random positive outscores a
// uniformly random negative, ties counted 1/2. Throws if labels are all one
// class.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);
double auroc(const ImageD& scores, const Mask2& gt);

double median(std::span<const double> values);

struct BootstrapInterval {
  double lo = 0.0;
  double hi = 0.0;
  std::uint64_t seed = 0;
};

// Percentile bootstrap for the median: resample with replacement n_boot
// times, take the empirical (1-level)/2 and 1-(1-level)/2 quantiles of the
// resampled medians (inverse-ECDF, so the endpoints are order statistics of
// the replicate values). Replicate r draws from its own counter stream keyed
// by (seed, r), so the result is independent of evaluation order.
BootstrapInterval bootstrap_ci(std::span<const double> per_image_values, int n_boot = 5000,
                               double level = 0.95, std::uint64_t seed = 0);

}  // namespace roiunc
