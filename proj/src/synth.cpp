#include "roiunc/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "roiunc/metrics.hpp"
#include "roiunc/rng.hpp"

namespace roiunc {

namespace {

bool inside_ellipse(double i, double j, const Ellipse& e) {
  const double di = (i - e.center_row) / e.axis_row;
  const double dj = (j - e.center_col) / e.axis_col;
  return di * di + dj * dj <= 1.0;
}

bool inside_disk(double i, double j, const Disk& d) {
  const double di = i - d.center_row;
  const double dj = j - d.center_col;
  return di * di + dj * dj <= d.radius * d.radius;
}

void validate_spec(const PhantomSpec& spec) {
  if (spec.rows <= 0 || spec.cols <= 0) {
    throw std::invalid_argument("phantom: image dimensions must be positive");
  }
  if (spec.alpha < 1) {
    throw std::invalid_argument("phantom: alpha must be at least 1");
  }
  if (spec.sigma_tumor < 0.0 || spec.sigma_non_tumor < 0.0 || spec.sigma_non_tissue < 0.0) {
    throw std::invalid_argument("phantom: noise sigmas must be non-negative");
  }
  if (spec.boundary_band < 0) {
    throw std::invalid_argument("phantom: boundary band must be non-negative");
  }
  if (spec.tissue_ellipse.axis_row <= 0.0 || spec.tissue_ellipse.axis_col <= 0.0) {
    throw std::invalid_argument("phantom: ellipse axes must be positive");
  }
  for (const Disk& d : spec.tumor_blobs) {
    if (d.radius <= 0.0) throw std::invalid_argument("phantom: blob radius must be positive");
  }
}

// Chebyshev-window max filter, separable: pixels within `band` of a noisier
// region inherit its sigma, widening the uncertain strip along region borders.
ImageD window_max(const ImageD& in, int band) {
  if (band == 0) return in;
  const Eigen::Index rows = in.rows(), cols = in.cols();
  ImageD rows_pass(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      const Eigen::Index lo = std::max<Eigen::Index>(0, j - band);
      const Eigen::Index hi = std::min<Eigen::Index>(cols - 1, j + band);
      double m = in(i, lo);
      for (Eigen::Index k = lo + 1; k <= hi; ++k) m = std::max(m, in(i, k));
      rows_pass(i, j) = m;
    }
  }
  ImageD out(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      const Eigen::Index lo = std::max<Eigen::Index>(0, i - band);
      const Eigen::Index hi = std::min<Eigen::Index>(rows - 1, i + band);
      double m = rows_pass(lo, j);
      for (Eigen::Index k = lo + 1; k <= hi; ++k) m = std::max(m, rows_pass(k, j));
      out(i, j) = m;
    }
  }
  return out;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Phantom generate_phantom(const PhantomSpec& spec, std::string_view image_id) {
  validate_spec(spec);
  const Eigen::Index rows = spec.rows, cols = spec.cols;

  Mask2 tissue(rows, cols);
  Mask2 gt(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double y = static_cast<double>(i), x = static_cast<double>(j);
      tissue(i, j) = inside_ellipse(y, x, spec.tissue_ellipse) ? 1 : 0;
      std::uint8_t t = 0;
      for (const Disk& d : spec.tumor_blobs) {
        if (inside_disk(y, x, d)) {
          t = 1;
          break;
        }
      }
      gt(i, j) = t;
    }
  }
  if (((gt == 1) && (tissue == 0)).any()) {
    throw std::invalid_argument("phantom: tumor blobs extend outside the tissue ellipse");
  }

  // Colors chosen against the white-threshold convention: background channels
  // all >= 220 (classified non-tissue), tissue/tumor have a channel below it.
  RgbImage rgb;
  rgb.r.resize(rows, cols);
  rgb.g.resize(rows, cols);
  rgb.b.resize(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      std::uint8_t r = 245, g = 245, b = 245;
      if (gt(i, j) == 1) {
        r = 205, g = 120, b = 160;
      } else if (tissue(i, j) == 1) {
        r = 230, g = 150, b = 180;
      }
      rgb.r(i, j) = r;
      rgb.g(i, j) = g;
      rgb.b(i, j) = b;
    }
  }

  PhantomTruth truth;
  truth.rgb = std::move(rgb);
  truth.gt = gt;
  truth.true_regions = derive_regions(tissue, gt);

  truth.expected_logit_field.resize(rows, cols);
  ImageD sigma(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      truth.expected_logit_field(i, j) = gt(i, j) == 1 ? kPhantomBaseLogit : -kPhantomBaseLogit;
      if (truth.true_regions.tumor(i, j) == 1) {
        sigma(i, j) = spec.sigma_tumor;
      } else if (truth.true_regions.non_tumor(i, j) == 1) {
        sigma(i, j) = spec.sigma_non_tumor;
      } else {
        sigma(i, j) = spec.sigma_non_tissue;
      }
    }
  }
  sigma = window_max(sigma, spec.boundary_band);

  // One counter per (pixel, iteration); draws are independent of evaluation
  // order, so regenerating any sub-block yields identical values.
  const CounterRng rng = CounterRng::keyed(spec.seed, fnv1a64(image_id));
  Tensor3 probs(spec.alpha, rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      const std::uint64_t pixel = static_cast<std::uint64_t>(i * cols + j);
      for (int t = 0; t < spec.alpha; ++t) {
        const std::uint64_t counter = pixel * static_cast<std::uint64_t>(spec.alpha) +
                                      static_cast<std::uint64_t>(t);
        const double z = rng.normal(counter);
        const double logit = truth.expected_logit_field(i, j) + sigma(i, j) * z;
        probs.at(t, i, j) = static_cast<float>(sigmoid(logit));
      }
    }
  }

  Phantom out;
  out.truth = std::move(truth);
  out.stack = PredictionStack::from_tensor(std::move(probs));
  return out;
}

CohortOutput generate_cohort(const PhantomSpec& base, int n_images,
                             std::span<const double> dice_noise_sweep,
                             const std::filesystem::path& out_dir) {
  if (n_images < 1) throw std::invalid_argument("cohort: need at least one image");
  if (static_cast<std::size_t>(n_images) != dice_noise_sweep.size()) {
    throw std::invalid_argument("cohort: noise sweep length must match image count");
  }
  for (double m : dice_noise_sweep) {
    if (m < 0.0) throw std::invalid_argument("cohort: noise multipliers must be non-negative");
  }
  std::filesystem::create_directories(out_dir);

  CohortOutput out;
  for (int n = 0; n < n_images; ++n) {
    char id_buf[32];
    std::snprintf(id_buf, sizeof(id_buf), "phantom_%03d", n);
    const std::string image_id(id_buf);

    PhantomSpec spec = base;
    spec.sigma_tumor *= dice_noise_sweep[static_cast<std::size_t>(n)];
    spec.sigma_non_tumor *= dice_noise_sweep[static_cast<std::size_t>(n)];
    spec.sigma_non_tissue *= dice_noise_sweep[static_cast<std::size_t>(n)];

    const Phantom phantom = generate_phantom(spec, image_id);

    ManifestEntry entry;
    entry.image_id = image_id;
    entry.stack_path = out_dir / (image_id + "_stack.runc");
    entry.rgb_path = out_dir / (image_id + "_rgb.png");
    entry.gt_path = out_dir / (image_id + "_gt.png");
    entry.has_tumor = (phantom.truth.gt == 1).any();

    write_tensor(phantom.stack.probs, entry.stack_path);
    write_rgb(phantom.truth.rgb, *entry.rgb_path);
    write_mask(phantom.truth.gt, entry.gt_path);

    const Mask2 pred = aggregate_prediction(phantom.stack);
    CohortTruthRow row;
    row.image_id = image_id;
    row.sigma_tumor = spec.sigma_tumor;
    row.sigma_non_tumor = spec.sigma_non_tumor;
    row.sigma_non_tissue = spec.sigma_non_tissue;
    row.true_dice_after_aggregation = dice(confusion(pred, phantom.truth.gt));

    out.manifest.entries.push_back(std::move(entry));
    out.truth.push_back(std::move(row));
  }

  write_manifest(out.manifest, out_dir / "manifest.json");

  std::ofstream csv(out_dir / "truth.csv", std::ios::binary);
  if (!csv) throw std::runtime_error("cohort: cannot open truth.csv for writing");
  csv << "image_id,sigma_T,sigma_NT,sigma_NTi,true_dice_after_aggregation\n";
  for (const CohortTruthRow& row : out.truth) {
    csv << row.image_id << ',' << format_g17(row.sigma_tumor) << ','
        << format_g17(row.sigma_non_tumor) << ',' << format_g17(row.sigma_non_tissue) << ','
        << format_g17(row.true_dice_after_aggregation) << '\n';
  }
  if (!csv.flush()) throw std::runtime_error("cohort: failed writing truth.csv");

  return out;
}

}  // namespace roiunc
