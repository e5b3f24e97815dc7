#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "roiunc/regions.hpp"
#include "roiunc/stats.hpp"

namespace roiunc {

// Verbosity is controlled by the ROI_UNC_LOG environment variable:
// debug | info | warn (default) | error | quiet. Messages go to stderr.
enum class LogLevel { kDebug = 0, kInfo, kWarn, kError, kQuiet };
LogLevel log_threshold();
void log_message(LogLevel level, const std::string& message);

// Shared knobs for the manifest-driven commands. Defaults mirror the library
// defaults so the CLI and direct library use agree.
struct RunConfig {
  std::filesystem::path manifest_path;
  std::filesystem::path output_dir;
  double threshold = 0.95;
  bool binarize_iters = true;
  double p_hi = 67.0;
  double p_lo = 33.0;
  DenomConvention denom = DenomConvention::kRegionPixels;
  int white_threshold = 220;
  int n_boot = 5000;
  double ci_level = 0.95;
  std::uint64_t seed = 0;
  int jobs = 1;
  bool pooled_auroc = false;
};

struct SynthConfig {
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  int n_images = 20;
  Eigen::Index rows = 256;
  Eigen::Index cols = 256;
  int alpha = 50;
  double sigma_tumor = 1.0;
  double sigma_non_tumor = 0.6;
  double sigma_non_tissue = 0.3;
  double sweep_lo = 0.5;
  double sweep_hi = 2.1;
  bool tumor_free = false;
  int boundary_band = 2;
};

struct FitConfig {
  RunConfig run;
  // Image ids excluded from the fit; their RMSE is reported separately.
  std::vector<std::string> holdout_ids;
};

struct PredictConfig {
  std::filesystem::path model_path;
  std::filesystem::path records_path;
  std::filesystem::path output_path;
};

// Each command returns a process exit code: 0 iff no per-image errors
// occurred (fatal configuration/fit errors throw instead).
int run_synth(const SynthConfig& config);
int run_aggregate(const RunConfig& config);
int run_regions(const RunConfig& config);
int run_metrics(const RunConfig& config);
int run_fit(const FitConfig& config);
int run_predict(const PredictConfig& config);
int run_render(const RunConfig& config);

}  // namespace roiunc
