#include "roiunc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "roiunc/rng.hpp"

namespace roiunc {

ConfusionCounts confusion(const Mask2& pred, const Mask2& gt) {
  require_same_shape(pred, gt, "confusion");
  require_binary(pred, "confusion");
  require_binary(gt, "confusion");

  ConfusionCounts c;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    for (Eigen::Index j = 0; j < pred.cols(); ++j) {
      if (gt(i, j)) {
        pred(i, j) ? ++c.tp : ++c.fn;
      } else {
        pred(i, j) ? ++c.fp : ++c.tn;
      }
    }
  }
  return c;
}

double dice(const ConfusionCounts& c) {
  const std::uint64_t denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) return 1.0;  // both masks empty: nothing to segment, nothing segmented
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

std::pair<double, double> tpr_fpr(const ConfusionCounts& c) {
  const std::uint64_t pos = c.tp + c.fn;
  const std::uint64_t neg = c.fp + c.tn;
  const double tpr = pos == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(pos);
  const double fpr = neg == 0 ? 0.0 : static_cast<double>(c.fp) / static_cast<double>(neg);
  return {tpr, fpr};
}

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auroc: length mismatch");
  std::uint64_t pos = 0;
  for (std::uint8_t l : labels) {
    if (l > 1) throw std::invalid_argument("auroc: labels must be 0 or 1");
    pos += l;
  }
  const std::uint64_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw std::invalid_argument("AUROC undefined: labels are all one class");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Rank sum of positives with average ranks over tie groups.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) rank_sum_pos += avg_rank;
    }
    i = j;
  }

  const double u = rank_sum_pos - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1);
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

double auroc(const ImageD& scores, const Mask2& gt) {
  require_same_shape(scores, gt, "auroc");
  require_binary(gt, "auroc");
  std::vector<double> s;
  std::vector<std::uint8_t> l;
  s.reserve(static_cast<std::size_t>(scores.size()));
  l.reserve(static_cast<std::size_t>(scores.size()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      s.push_back(scores(i, j));
      l.push_back(gt(i, j));
    }
  }
  return auroc(s, l);
}

double median(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty list");
  std::vector<double> v(values.begin(), values.end());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  if (v.size() % 2 == 1) return v[mid];
  const double hi = v[mid];
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

namespace {

// Inverse-ECDF quantile: the smallest order statistic with ECDF >= q.
double order_statistic_quantile(const std::vector<double>& sorted, double q) {
  const auto n = static_cast<double>(sorted.size());
  const double r = std::ceil(q * n);
  const auto idx = static_cast<std::size_t>(std::min(std::max(r - 1.0, 0.0), n - 1.0));
  return sorted[idx];
}

}  // namespace

BootstrapInterval bootstrap_ci(std::span<const double> per_image_values, int n_boot, double level,
                               std::uint64_t seed) {
  if (per_image_values.empty()) throw std::invalid_argument("bootstrap_ci: empty list");
  if (n_boot < 1) throw std::invalid_argument("bootstrap_ci: n_boot must be >= 1");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("bootstrap_ci: bad level");

  const std::size_t n = per_image_values.size();
  std::vector<double> stats(static_cast<std::size_t>(n_boot));
  std::vector<double> sample(n);
  for (int r = 0; r < n_boot; ++r) {
    const CounterRng rng = CounterRng::keyed(seed, static_cast<std::uint64_t>(r));
    for (std::size_t i = 0; i < n; ++i) {
      sample[i] = per_image_values[rng.below(i, n)];
    }
    stats[static_cast<std::size_t>(r)] = median(sample);
  }
  std::sort(stats.begin(), stats.end());

  const double alpha2 = (1.0 - level) / 2.0;
  BootstrapInterval ci;
  ci.lo = order_statistic_quantile(stats, alpha2);
  ci.hi = order_statistic_quantile(stats, 1.0 - alpha2);
  ci.seed = seed;
  return ci;
}

}  // namespace roiunc
