// Acceptance suite: exercises the ten gate criteria end to end and prints one
// PASS/FAIL line per criterion. Exits nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "roiunc/mc_agg.hpp"
#include "roiunc/metrics.hpp"
#include "roiunc/pipeline.hpp"
#include "roiunc/regions.hpp"
#include "roiunc/rng.hpp"
#include "roiunc/stats.hpp"
#include "roiunc/synth.hpp"
#include "roiunc/tensor_io.hpp"
#include "test_util.hpp"

using namespace roiunc;
namespace fs = std::filesystem;

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error(msg);
}

std::string fmt(const char* format, double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, value);
  return buf;
}

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Mask2 random_mask(Eigen::Index h, Eigen::Index w, SequentialRng& rng) {
  Mask2 m(h, w);
  for (Eigen::Index i = 0; i < h; ++i) {
    for (Eigen::Index j = 0; j < w; ++j) m(i, j) = static_cast<std::uint8_t>(rng.below(2));
  }
  return m;
}

PhantomSpec phantom_64(std::uint64_t seed) {
  PhantomSpec spec;
  spec.seed = seed;
  spec.rows = 64;
  spec.cols = 64;
  spec.tissue_ellipse = {32.0, 32.0, 25.0, 28.0};
  spec.tumor_blobs = {{27.0, 25.0, 6.0}, {40.0, 38.0, 5.0}};
  spec.alpha = 10;
  spec.sigma_tumor = 1.0;
  spec.sigma_non_tumor = 0.6;
  spec.sigma_non_tissue = 0.3;
  return spec;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), path.string() + ": cannot open");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// ---------------------------------------------------------------------------
// 1. confusion/dice/tpr/fpr against a naive double loop; AUROC against the
//    every-pair count. Budget: 10 s.

std::string criterion_metric_oracles() {
  const auto start = std::chrono::steady_clock::now();
  SequentialRng rng(101);

  for (int trial = 0; trial < 1000; ++trial) {
    const Mask2 pred = random_mask(16, 16, rng);
    const Mask2 gt = random_mask(16, 16, rng);

    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (Eigen::Index i = 0; i < 16; ++i) {
      for (Eigen::Index j = 0; j < 16; ++j) {
        if (gt(i, j) == 1 && pred(i, j) == 1) ++tp;
        if (gt(i, j) == 0 && pred(i, j) == 1) ++fp;
        if (gt(i, j) == 1 && pred(i, j) == 0) ++fn;
        if (gt(i, j) == 0 && pred(i, j) == 0) ++tn;
      }
    }
    const ConfusionCounts c = confusion(pred, gt);
    require(c.tp == tp && c.fp == fp && c.fn == fn && c.tn == tn, "confusion count mismatch");

    const double dice_ref =
        (2 * tp + fp + fn) == 0 ? 1.0
                                : 2.0 * static_cast<double>(tp) /
                                      static_cast<double>(2 * tp + fp + fn);
    require(dice(c) == dice_ref, "dice mismatch");

    const double tpr_ref = (tp + fn) == 0
                               ? 0.0
                               : static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double fpr_ref = (fp + tn) == 0
                               ? 0.0
                               : static_cast<double>(fp) / static_cast<double>(fp + tn);
    const auto [tpr_val, fpr_val] = tpr_fpr(c);
    require(tpr_val == tpr_ref && fpr_val == fpr_ref, "tpr/fpr mismatch");
  }

  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> scores(50);
    std::vector<std::uint8_t> labels(50);
    const bool quantize = trial % 2 == 1;  // half the instances carry heavy ties
    for (std::size_t i = 0; i < scores.size(); ++i) {
      scores[i] = quantize ? static_cast<double>(rng.below(8)) / 8.0 : rng.uniform01();
      labels[i] = static_cast<std::uint8_t>(rng.below(2));
    }
    labels[0] = 1;
    labels[1] = 0;

    double wins = 0.0;
    std::uint64_t pos = 0, neg = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (!labels[i]) continue;
      ++pos;
      for (std::size_t j = 0; j < scores.size(); ++j) {
        if (labels[j]) continue;
        if (scores[i] > scores[j]) wins += 1.0;
        else if (scores[i] == scores[j]) wins += 0.5;
      }
    }
    neg = scores.size() - pos;
    const double ref = wins / (static_cast<double>(pos) * static_cast<double>(neg));
    require(std::fabs(auroc(scores, labels) - ref) <= 1e-12, "auroc oracle mismatch");
  }

  const double secs = elapsed_seconds(start);
  require(secs < 10.0, "metric oracle run took " + fmt("%.1f", secs) + " s (budget 10 s)");
  return "1000 mask pairs exact, 1000 auroc instances within 1e-12, " + fmt("%.2f", secs) + " s";
}

// ---------------------------------------------------------------------------
// 2. uncertainty_map against a sort-and-interpolate reference.

double interpolated(const std::vector<double>& sorted, double p) {
  const double r = p / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(r));
  const auto hi = static_cast<std::size_t>(std::ceil(r));
  const double frac = r - std::floor(r);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::string criterion_percentile_oracle() {
  SequentialRng rng(202);
  const Eigen::Index rows = 20, cols = 25;  // 500 pixels
  const int iters = 50;
  Tensor3 t(iters, rows, cols);
  for (float& v : t.data) v = static_cast<float>(rng.uniform01());
  const PredictionStack stack = PredictionStack::from_tensor(t);
  const UncertaintyMap um = uncertainty_map(stack);

  double max_err = 0.0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      std::vector<double> u(iters);
      for (int k = 0; k < iters; ++k) {
        const double p = static_cast<double>(stack.probs.at(k, i, j));
        u[static_cast<std::size_t>(k)] = std::max(p, 1.0 - p);
      }
      std::sort(u.begin(), u.end());
      const double spread = clamp01(interpolated(u, 67.0) - interpolated(u, 33.0));
      max_err = std::max(max_err, std::fabs(um.values(i, j) - spread));
    }
  }
  require(max_err <= 1e-12, "percentile spread deviates by " + fmt("%.3g", max_err));

  // Constant stacks collapse to exactly zero.
  Tensor3 flat(iters, rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      const float v = static_cast<float>(rng.uniform01());
      for (int k = 0; k < iters; ++k) flat.at(k, i, j) = v;
    }
  }
  const UncertaintyMap um_flat = uncertainty_map(PredictionStack::from_tensor(flat));
  require((um_flat.values == 0.0).all(), "constant stack spread is not exactly 0");

  return "500 pixels x 50 iterations, max deviation " + fmt("%.2g", max_err) +
         ", constant stack exactly 0";
}

// ---------------------------------------------------------------------------
// 3. Region partition exactness and the all_pixels decomposition identity.

void check_partition(const RegionMasks& masks, const ImageD& map) {
  const Eigen::Index rows = masks.tumor.rows(), cols = masks.tumor.cols();
  std::uint64_t total = 0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      const int covering =
          masks.tumor(i, j) + masks.non_tumor(i, j) + masks.non_tissue(i, j);
      require(covering == 1, "pixel not covered exactly once");
      ++total;
    }
  }
  const std::uint64_t count_sum = masks.tumor.cast<std::uint64_t>().sum() +
                                  masks.non_tumor.cast<std::uint64_t>().sum() +
                                  masks.non_tissue.cast<std::uint64_t>().sum();
  require(count_sum == total, "region pixel counts do not sum to H*W");

  const RegionUncertainties ru =
      compute_region_uncertainties(map, masks, DenomConvention::kAllPixels);
  const double sum = ru.tumor.value + ru.non_tumor.value + ru.non_tissue.value;
  require(std::fabs(sum - ru.overall.value) <= 1e-12,
          "decomposition identity off by " + fmt("%.3g", std::fabs(sum - ru.overall.value)));
}

std::string criterion_region_partition() {
  SequentialRng rng(303);
  for (int trial = 0; trial < 200; ++trial) {
    const Mask2 tissue = random_mask(16, 16, rng);
    const Mask2 gt = random_mask(16, 16, rng);
    ImageD map(16, 16);
    for (Eigen::Index i = 0; i < 16; ++i) {
      for (Eigen::Index j = 0; j < 16; ++j) map(i, j) = rng.uniform01();
    }
    check_partition(derive_regions(tissue, gt), map);
  }

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Phantom phantom = generate_phantom(phantom_64(seed));
    const RegionMasks masks =
        derive_regions(binarize_tissue(phantom.truth.rgb), phantom.truth.gt);
    check_partition(masks, uncertainty_map(phantom.stack).values);
  }
  return "200 random + 20 phantom images: exact partition, decomposition within 1e-12";
}

// ---------------------------------------------------------------------------
// 4. OLS recovery on planted data, noiseless then against 3 standard errors.

std::vector<ImageRecord> planted_records(SequentialRng& rng, const double (&beta)[4],
                                         double noise_sigma) {
  std::vector<ImageRecord> records(44);
  for (std::size_t i = 0; i < records.size(); ++i) {
    ImageRecord& r = records[i];
    r.image_id = "rec" + std::to_string(i);
    r.x = {0.0, 0.05 * rng.uniform01(), 0.05 * rng.uniform01(), 0.05 * rng.uniform01()};
    r.dice = beta[0] + beta[1] * r.x[1] + beta[2] * r.x[2] + beta[3] * r.x[3] +
             noise_sigma * (noise_sigma > 0.0 ? rng.normal() : 0.0);
  }
  return records;
}

std::string criterion_ols_recovery() {
  SequentialRng rng(404);
  const auto draw_beta = [&](double (&beta)[4]) {
    for (double& b : beta) b = -30.0 + 40.0 * rng.uniform01();
  };

  double beta[4];
  draw_beta(beta);
  const LinearModel noiseless = fit_ols(planted_records(rng, beta, 0.0), ModelKind::kFullEq1);
  double max_err = std::fabs(noiseless.intercept - beta[0]);
  for (int k = 0; k < 3; ++k) {
    max_err = std::max(max_err, std::fabs(noiseless.coefficients[static_cast<std::size_t>(k)] -
                                          beta[k + 1]));
  }
  require(max_err <= 1e-6, "noiseless recovery error " + fmt("%.3g", max_err));

  int covered = 0;
  for (int trial = 0; trial < 200; ++trial) {
    draw_beta(beta);
    const LinearModel m = fit_ols(planted_records(rng, beta, 0.02), ModelKind::kFullEq1);
    bool ok = std::fabs(m.intercept - beta[0]) <= 3.0 * m.intercept_std_error;
    for (int k = 0; k < 3; ++k) {
      const auto idx = static_cast<std::size_t>(k);
      require(m.coef_std_errors[idx].has_value(), "missing standard error");
      ok = ok && std::fabs(m.coefficients[idx] - beta[k + 1]) <= 3.0 * *m.coef_std_errors[idx];
    }
    covered += ok;
  }
  require(covered >= 190, "3-SE coverage only " + std::to_string(covered) + "/200");
  return "noiseless max error " + fmt("%.2g", max_err) + ", 3-SE coverage " +
         std::to_string(covered) + "/200";
}

// ---------------------------------------------------------------------------
// 5. Paper-shape reproduction on the default 20-image 256x256 cohort.

std::string criterion_paper_shape() {
  const auto start = std::chrono::steady_clock::now();
  TempDir dir("accept_shape");

  SynthConfig synth;  // defaults: 20 images, 256x256, alpha 50, sweep 0.5..2.1
  synth.output_dir = dir.path / "cohort";
  require(run_synth(synth) == 0, "synth failed");

  FitConfig fit;
  fit.run.manifest_path = synth.output_dir / "manifest.json";
  fit.run.output_dir = dir.path / "out";
  fit.run.jobs = 4;
  fit.run.n_boot = 500;
  require(run_fit(fit) == 0, "fit failed");

  const LinearModel eq3 = model_from_json(slurp(fit.run.output_dir / "model_overall_eq3.json"));
  require(eq3.spearman_rho[0].has_value() && eq3.spearman_p[0].has_value(),
          "eq3 rank correlation missing");
  const double rho = *eq3.spearman_rho[0];
  const double p = *eq3.spearman_p[0];
  require(rho < -0.5, "spearman rho " + fmt("%.3f", rho) + " not below -0.5");
  require(p < 0.05, "spearman p " + fmt("%.3g", p) + " not below 0.05");

  for (const char* name : {"tumor_eq2i", "nontumor_eq2ii", "nontissue_eq2iii", "overall_eq3"}) {
    const LinearModel m =
        model_from_json(slurp(fit.run.output_dir / (std::string("model_") + name + ".json")));
    require(m.coefficients[0] < 0.0, std::string(name) + " slope is not negative");
    require(m.rmse <= 0.1, std::string(name) + " rmse " + fmt("%.3f", m.rmse) + " above 0.1");
  }
  const LinearModel eq1 = model_from_json(slurp(fit.run.output_dir / "model_full_eq1.json"));
  require(eq1.rmse <= 0.1, "full model rmse " + fmt("%.3f", eq1.rmse) + " above 0.1");

  const double secs = elapsed_seconds(start);
  require(secs < 120.0, "paper-shape run took " + fmt("%.0f", secs) + " s (budget 120 s)");
  return "rho " + fmt("%.3f", rho) + ", p " + fmt("%.2g", p) + ", full rmse " +
         fmt("%.4f", eq1.rmse) + ", " + fmt("%.1f", secs) + " s";
}

// ---------------------------------------------------------------------------
// 6. Tumor-free cohort: the tumor coefficient is exactly zero.

std::string criterion_tumor_free_alpha1() {
  TempDir dir("accept_tf");
  SynthConfig synth;
  synth.output_dir = dir.path / "cohort";
  synth.seed = 2;
  synth.n_images = 8;
  synth.rows = 64;
  synth.cols = 64;
  synth.alpha = 12;
  synth.tumor_free = true;
  require(run_synth(synth) == 0, "synth failed");

  FitConfig fit;
  fit.run.manifest_path = synth.output_dir / "manifest.json";
  fit.run.output_dir = dir.path / "out";
  require(run_fit(fit) == 0, "fit failed");

  const LinearModel eq1 = model_from_json(slurp(fit.run.output_dir / "model_full_eq1.json"));
  require(eq1.dropped[0], "tumor predictor was not dropped");
  require(eq1.coefficients[0] == 0.0, "tumor coefficient is not exactly 0");
  const LinearModel eq2i = model_from_json(slurp(fit.run.output_dir / "model_tumor_eq2i.json"));
  require(eq2i.dropped[0] && eq2i.coefficients[0] == 0.0, "eq2i tumor coefficient not dropped");
  return "tumor coefficient exactly 0 and flagged dropped in eq1 and eq2i";
}

// ---------------------------------------------------------------------------
// 7. Noiseless phantoms: perfect Dice, zero maps, pure-blue heatmaps.

std::string criterion_zero_sigma_perfection() {
  PhantomSpec spec = phantom_64(5);
  spec.sigma_tumor = 0.0;
  spec.sigma_non_tumor = 0.0;
  spec.sigma_non_tissue = 0.0;
  const Phantom phantom = generate_phantom(spec);
  const Mask2 pred = aggregate_prediction(phantom.stack);
  require((pred == phantom.truth.gt).all(), "prediction differs from ground truth");
  require(dice(confusion(pred, phantom.truth.gt)) == 1.0, "dice is not exactly 1");
  require((uncertainty_map(phantom.stack).values == 0.0).all(), "uncertainty map not all zero");

  TempDir dir("accept_zero");
  SynthConfig synth;
  synth.output_dir = dir.path / "cohort";
  synth.n_images = 2;
  synth.rows = 64;
  synth.cols = 64;
  synth.alpha = 12;
  synth.sweep_lo = 0.0;
  synth.sweep_hi = 0.0;
  require(run_synth(synth) == 0, "synth failed");

  RunConfig run;
  run.manifest_path = synth.output_dir / "manifest.json";
  run.output_dir = dir.path / "out";
  require(run_aggregate(run) == 0, "aggregate failed");
  require(run_render(run) == 0, "render failed");

  for (int img = 0; img < 2; ++img) {
    for (const char* suffix : {"overall", "tumor", "nontumor", "nontissue"}) {
      char name[64];
      std::snprintf(name, sizeof(name), "phantom_%03d_unc_%s.png", img, suffix);
      const RgbImage heat = read_rgb(run.output_dir / name);
      require((heat.r == 0).all() && (heat.g == 0).all() && (heat.b == 255).all(),
              std::string(name) + " is not uniformly blue");
    }
  }
  return "dice exactly 1, maps exactly 0, 8 heatmaps pure blue";
}

// ---------------------------------------------------------------------------
// 8. Bootstrap behavior: degenerate width, reproducibility, coverage.

std::string criterion_bootstrap() {
  const std::vector<double> constant(13, 0.875);
  const BootstrapInterval flat = bootstrap_ci(constant, 300, 0.95, 1);
  require(flat.lo == 0.875 && flat.hi == 0.875, "constant input interval is not zero-width");

  SequentialRng rng(808);
  std::vector<double> values(19);
  for (double& v : values) v = rng.uniform01();
  const BootstrapInterval a = bootstrap_ci(values, 2000, 0.95, 42);
  const BootstrapInterval b = bootstrap_ci(values, 2000, 0.95, 42);
  require(a.lo == b.lo && a.hi == b.hi, "same-seed intervals differ");

  // Coverage of the true median (0) of a standard normal, n = 25.
  int hits = 0;
  const int trials = 500;
  for (int trial = 0; trial < trials; ++trial) {
    const CounterRng draws = CounterRng::keyed(4242, static_cast<std::uint64_t>(trial));
    std::vector<double> sample(25);
    for (std::size_t i = 0; i < sample.size(); ++i) {
      sample[i] = draws.normal(static_cast<std::uint64_t>(i));
    }
    const BootstrapInterval ci =
        bootstrap_ci(sample, 1000, 0.95, static_cast<std::uint64_t>(trial));
    hits += (ci.lo <= 0.0 && 0.0 <= ci.hi);
  }
  require(hits >= trials * 9 / 10,
          "coverage only " + std::to_string(hits) + "/" + std::to_string(trials));
  return "zero-width on constants, bit-reproducible, coverage " + std::to_string(hits) + "/500";
}

// ---------------------------------------------------------------------------
// 9. Bundled overall-uncertainty model applied at the published operating point.

std::string criterion_predict_path() {
  const fs::path model_path =
      fs::path(ROI_UNC_DATA_DIR) / "reference_models" / "tumor" / "overall_eq3.json";
  const LinearModel model = model_from_json(slurp(model_path));

  ImageRecord record;
  record.image_id = "operating_point";
  record.x = {0.0089, 0.0, 0.0, 0.0};
  const DicePrediction p = predict_dice(model, record);
  require(std::fabs(p.raw - 0.8747) <= 1e-4,
          "predicted " + fmt("%.6f", p.raw) + ", expected 0.8747 within 1e-4");
  require(p.clamped == p.raw, "in-range prediction was clamped");
  return "x0 = 0.0089 -> " + fmt("%.6f", p.raw) + " (within 1e-4 of 0.8747)";
}

// ---------------------------------------------------------------------------
// 10. Full CLI pipeline is byte-identical across reruns and worker counts.

int run_cli(const std::string& args) {
  const std::string cmd = "ROI_UNC_LOG=quiet \"" + std::string(ROI_UNC_CLI_PATH) + "\" " + args;
  return std::system(cmd.c_str());
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    out[fs::relative(entry.path(), root).generic_string()] = slurp(entry.path());
  }
  return out;
}

std::string criterion_determinism() {
  TempDir dir("accept_determinism");
  const fs::path cohort = dir.path / "cohort";
  require(run_cli("synth --out \"" + cohort.string() +
                  "\" --seed 11 --n-images 6 --rows 64 --cols 64 --alpha 10") == 0,
          "cli synth failed");

  const std::string manifest = (cohort / "manifest.json").string();
  for (const auto& [out, jobs] :
       {std::pair<fs::path, const char*>{dir.path / "run_a", "1"},
        std::pair<fs::path, const char*>{dir.path / "run_b", "3"}}) {
    const std::string out_str = out.string();
    require(run_cli("aggregate --manifest \"" + manifest + "\" --out \"" + out_str +
                    "\" --jobs " + jobs) == 0,
            "cli aggregate failed");
    require(run_cli("fit --manifest \"" + manifest + "\" --out \"" + out_str + "\" --jobs " +
                    jobs) == 0,
            "cli fit failed");
    require(run_cli("predict --model \"" + out_str + "/model_overall_eq3.json\" --out \"" +
                    out_str + "\"") == 0,
            "cli predict failed");
    require(run_cli("render --manifest \"" + manifest + "\" --out \"" + out_str + "\" --jobs " +
                    jobs) == 0,
            "cli render failed");
  }

  const std::map<std::string, std::string> a = tree_bytes(dir.path / "run_a");
  const std::map<std::string, std::string> b = tree_bytes(dir.path / "run_b");
  require(!a.empty(), "pipeline produced no files");
  require(a.size() == b.size(), "output file sets differ in size");
  for (const auto& [name, bytes] : a) {
    const auto it = b.find(name);
    require(it != b.end(), name + " missing from the second run");
    require(it->second == bytes, name + " differs between --jobs 1 and --jobs 3");
  }
  return std::to_string(a.size()) + " files byte-identical across --jobs 1 and --jobs 3";
}

// ---------------------------------------------------------------------------

struct Criterion {
  int number;
  const char* name;
  std::string (*fn)();
};

}  // namespace

int main() {
  const Criterion criteria[] = {
      {1, "metric oracle equivalence", criterion_metric_oracles},
      {2, "percentile spread oracle", criterion_percentile_oracle},
      {3, "region partition exactness", criterion_region_partition},
      {4, "ols planted-data recovery", criterion_ols_recovery},
      {5, "paper-shape phantom cohort", criterion_paper_shape},
      {6, "tumor-free zero coefficient", criterion_tumor_free_alpha1},
      {7, "zero-noise perfection", criterion_zero_sigma_perfection},
      {8, "bootstrap interval behavior", criterion_bootstrap},
      {9, "bundled-model predict path", criterion_predict_path},
      {10, "pipeline determinism", criterion_determinism},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    std::string detail;
    bool ok = false;
    try {
      detail = c.fn();
      ok = true;
    } catch (const std::exception& e) {
      detail = e.what();
    }
    std::printf("%s %2d %s: %s\n", ok ? "PASS" : "FAIL", c.number, c.name, detail.c_str());
    std::fflush(stdout);
    failures += !ok;
  }
  return failures == 0 ? 0 : 1;
}
