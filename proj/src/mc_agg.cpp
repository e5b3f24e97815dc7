#include "roiunc/mc_agg.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace roiunc {

PredictionStack PredictionStack::from_tensor(Tensor3 t) {
  if (t.iters == 0) throw std::invalid_argument("PredictionStack: empty stack");
  for (float v : t.data) {
    if (v < 0.0f || v > 1.0f) {
      throw std::invalid_argument("PredictionStack: probability outside [0,1]");
    }
  }
  PredictionStack s;
  s.alpha = static_cast<int>(t.iters);
  s.probs = std::move(t);
  return s;
}

double percentile_of_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("percentile: empty sample list");
  if (p < 0.0 || p > 100.0) throw std::invalid_argument("percentile: p outside [0,100]");
  const std::size_t n = sorted.size();
  const double rank = p / 100.0 * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(rank));
  if (lo == hi) return sorted[lo];
  const double frac = rank - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double percentile(std::span<const double> samples, double p) {
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  return percentile_of_sorted(sorted, p);
}

Mask2 aggregate_prediction(const PredictionStack& stack, bool binarize_iters, double threshold) {
  if (stack.probs.iters == 0) throw std::invalid_argument("aggregate_prediction: empty stack");
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw std::invalid_argument("aggregate_prediction: threshold must be in (0,1)");
  }
  const Eigen::Index T = stack.probs.iters;
  const Eigen::Index H = stack.probs.rows;
  const Eigen::Index W = stack.probs.cols;

  Mask2 out(H, W);
  for (Eigen::Index i = 0; i < H; ++i) {
    for (Eigen::Index j = 0; j < W; ++j) {
      double sum = 0.0;
      for (Eigen::Index t = 0; t < T; ++t) {
        const double p = stack.probs.at(t, i, j);
        sum += binarize_iters ? (p > 0.5 ? 1.0 : 0.0) : p;
      }
      const double mean = sum / static_cast<double>(T);
      out(i, j) = mean > threshold ? 1 : 0;
    }
  }
  return out;
}

ImageD mean_probability(const PredictionStack& stack) {
  if (stack.probs.iters == 0) throw std::invalid_argument("mean_probability: empty stack");
  const Eigen::Index T = stack.probs.iters;
  ImageD mean = ImageD::Zero(stack.probs.rows, stack.probs.cols);
  for (Eigen::Index t = 0; t < T; ++t) {
    mean += stack.probs.slice(t).cast<double>();
  }
  return mean / static_cast<double>(T);
}

UncertaintyMap uncertainty_map(const PredictionStack& stack, double p_hi, double p_lo) {
  if (stack.probs.iters == 0) throw std::invalid_argument("uncertainty_map: empty stack");
  if (!(0.0 <= p_lo && p_lo < p_hi && p_hi <= 100.0)) {
    throw std::invalid_argument("uncertainty_map: need 0 <= p_lo < p_hi <= 100");
  }
  const Eigen::Index T = stack.probs.iters;
  const Eigen::Index H = stack.probs.rows;
  const Eigen::Index W = stack.probs.cols;

  UncertaintyMap map;
  map.values.resize(H, W);
  std::vector<double> u(static_cast<std::size_t>(T));
  for (Eigen::Index i = 0; i < H; ++i) {
    for (Eigen::Index j = 0; j < W; ++j) {
      for (Eigen::Index t = 0; t < T; ++t) {
        const double p = stack.probs.at(t, i, j);
        u[static_cast<std::size_t>(t)] = std::max(p, 1.0 - p);
      }
      std::sort(u.begin(), u.end());
      const double spread = percentile_of_sorted(u, p_hi) - percentile_of_sorted(u, p_lo);
      map.values(i, j) = clamp01(spread);
    }
  }
  map.mean_uncertainty = mean_of_map(map.values);
  return map;
}

double mean_of_map(const ImageD& values) {
  if (values.size() == 0) return 0.0;
  KahanSum acc;
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) acc.add(values(i, j));
  }
  return acc.value() / static_cast<double>(values.size());
}

}  // namespace roiunc
