#pragma once

#include <span>

#include "roiunc/core.hpp"
#include "roiunc/tensor_io.hpp"

namespace roiunc {

// Stack of per-iteration foreground probabilities for one image. For a binary
// segmenter the single stored channel is the sigmoid foreground probability;
// the winning-class probability is max(p, 1-p).
struct PredictionStack {
  Tensor3 probs;
  int alpha = 0;  // iteration count, equals probs.iters

  static PredictionStack from_tensor(Tensor3 t);

  Eigen::Index rows() const { return probs.rows; }
  Eigen::Index cols() const { return probs.cols; }
};

struct UncertaintyMap {
  ImageD values;  // per-pixel spread, each in [0, 1]
  double mean_uncertainty = 0.0;
};

// Linear-interpolation percentile over n-1 intervals: rank r = p/100*(n-1),
// interpolate between the floor(r)-th and ceil(r)-th order statistics.
double percentile(std::span<const double> samples, double p);
double percentile_of_sorted(std::span<const double> sorted, double p);

// Collapses the stack into the final binary segmentation: per pixel, average
// the per-iteration class decisions (probability > 0.5) when binarize_iters
// is set, or the raw probabilities otherwise, then emit 1 iff the mean is
// strictly above the threshold.
Mask2 aggregate_prediction(const PredictionStack& stack, bool binarize_iters = true,
                           double threshold = 0.95);

// Per-pixel mean of the raw foreground probabilities, used as the score field
// for ranking metrics.
ImageD mean_probability(const PredictionStack& stack);

// Per-pixel winning-class probability spread across iterations:
// percentile(p_hi) - percentile(p_lo), clamped to [0, 1].
UncertaintyMap uncertainty_map(const PredictionStack& stack, double p_hi = 67.0,
                               double p_lo = 33.0);

double mean_of_map(const ImageD& values);

}  // namespace roiunc
