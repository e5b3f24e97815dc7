#include "roiunc/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "roiunc/mc_agg.hpp"
#include "roiunc/metrics.hpp"
#include "roiunc/synth.hpp"
#include "roiunc/tensor_io.hpp"

namespace roiunc {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Logging

namespace {

LogLevel parse_log_level() {
  const char* env = std::getenv("ROI_UNC_LOG");
  if (env == nullptr) return LogLevel::kWarn;
  const std::string v(env);
  if (v == "debug") return LogLevel::kDebug;
  if (v == "info") return LogLevel::kInfo;
  if (v == "warn") return LogLevel::kWarn;
  if (v == "error") return LogLevel::kError;
  if (v == "quiet") return LogLevel::kQuiet;
  return LogLevel::kWarn;
}

const char* level_tag(LogLevel level) {
  switch (level) {
    case LogLevel::kDebug: return "debug";
    case LogLevel::kInfo: return "info";
    case LogLevel::kWarn: return "warn";
    case LogLevel::kError: return "error";
    case LogLevel::kQuiet: return "quiet";
  }
  return "?";
}

std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

LogLevel log_threshold() {
  static const LogLevel level = parse_log_level();
  return level;
}

void log_message(LogLevel level, const std::string& message) {
  if (level < log_threshold()) return;
  const std::lock_guard<std::mutex> lock(log_mutex());
  std::fprintf(stderr, "roi-unc %s: %s\n", level_tag(level), message.c_str());
}

// ---------------------------------------------------------------------------
// Shared plumbing

namespace {

constexpr const char* kRecordsFile = "records.json";
constexpr const char* kMetricsFile = "metrics.json";
constexpr const char* kAggregateSummaryFile = "aggregate_summary.json";
constexpr const char* kFitReportFile = "fit_report.md";
constexpr const char* kPredictionsFile = "predictions.csv";

struct ImageStatus {
  bool ok = false;
  std::string error;
};

// Work-stealing loop over image indices. Each worker writes only its own
// slots, so no synchronization beyond the shared counter is needed; callers
// assemble outputs in manifest order afterwards, which keeps cohort files
// byte-identical regardless of completion order.
void for_each_index(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const int workers = static_cast<int>(std::min<std::size_t>(
      static_cast<std::size_t>(std::max(1, jobs)), std::max<std::size_t>(1, n)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (std::thread& t : pool) t.join();
}

// Runs `body(i)` for every image, converting exceptions into per-image error
// records instead of aborting the cohort.
std::vector<ImageStatus> over_images(const Manifest& manifest, int jobs,
                                     const std::function<void(std::size_t)>& body) {
  std::vector<ImageStatus> status(manifest.entries.size());
  for_each_index(manifest.entries.size(), jobs, [&](std::size_t i) {
    try {
      body(i);
      status[i].ok = true;
    } catch (const std::exception& e) {
      status[i].error = e.what();
      log_message(LogLevel::kWarn, manifest.entries[i].image_id + ": " + status[i].error);
    }
  });
  return status;
}

ordered_json errors_json(const Manifest& manifest, const std::vector<ImageStatus>& status) {
  ordered_json errors = ordered_json::array();
  for (std::size_t i = 0; i < status.size(); ++i) {
    if (!status[i].ok) {
      errors.push_back({{"image_id", manifest.entries[i].image_id}, {"error", status[i].error}});
    }
  }
  return errors;
}

int exit_code(const std::vector<ImageStatus>& status) {
  for (const ImageStatus& s : status) {
    if (!s.ok) return 1;
  }
  return 0;
}

void write_json_file(const ordered_json& doc, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << doc.dump(2) << "\n";
  if (!out.flush()) throw std::runtime_error(path.string() + ": write failed");
}

void write_text_file(const std::string& text, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << text;
  if (!out.flush()) throw std::runtime_error(path.string() + ": write failed");
}

PredictionStack load_stack(const ManifestEntry& entry) {
  return PredictionStack::from_tensor(read_tensor(entry.stack_path));
}

Mask2 load_gt(const ManifestEntry& entry, const PredictionStack& stack) {
  Mask2 gt = read_mask(entry.gt_path);
  if (gt.rows() != stack.probs.rows || gt.cols() != stack.probs.cols) {
    throw std::invalid_argument("ground truth shape " + std::to_string(gt.rows()) + "x" +
                                std::to_string(gt.cols()) + " does not match stack " +
                                std::to_string(stack.probs.rows) + "x" +
                                std::to_string(stack.probs.cols));
  }
  return gt;
}

RegionMasks load_regions(const ManifestEntry& entry, const Mask2& gt, int white_threshold) {
  if (!entry.rgb_path) {
    throw std::invalid_argument("manifest entry has no rgb_path; tissue binarization needs it");
  }
  const RgbImage rgb = read_rgb(*entry.rgb_path);
  require_same_shape(rgb.r, gt, "rgb vs ground truth");
  return derive_regions(binarize_tissue(rgb, white_threshold), gt);
}

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] =
        n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// synth

int run_synth(const SynthConfig& config) {
  if (config.n_images < 1) throw std::invalid_argument("synth: need at least one image");

  PhantomSpec base;
  base.seed = config.seed;
  base.rows = config.rows;
  base.cols = config.cols;
  base.alpha = config.alpha;
  base.sigma_tumor = config.sigma_tumor;
  base.sigma_non_tumor = config.sigma_non_tumor;
  base.sigma_non_tissue = config.sigma_non_tissue;
  base.boundary_band = config.boundary_band;

  // Default geometry is stated for a 256 grid; scale it to the requested size.
  const double sr = static_cast<double>(config.rows) / 256.0;
  const double sc = static_cast<double>(config.cols) / 256.0;
  const double sm = std::min(sr, sc);
  base.tissue_ellipse = {128.0 * sr, 128.0 * sc, 100.0 * sr, 112.0 * sc};
  base.tumor_blobs = {{110.0 * sr, 100.0 * sc, 24.0 * sm}, {160.0 * sr, 152.0 * sc, 20.0 * sm}};
  if (config.tumor_free) base.tumor_blobs.clear();

  const std::vector<double> sweep = linspace(config.sweep_lo, config.sweep_hi, config.n_images);
  log_message(LogLevel::kInfo, "synth: " + std::to_string(config.n_images) + " phantoms into " +
                                   config.output_dir.string());
  generate_cohort(base, config.n_images, sweep, config.output_dir);
  return 0;
}

// ---------------------------------------------------------------------------
// aggregate

int run_aggregate(const RunConfig& config) {
  const Manifest manifest = read_manifest(config.manifest_path, false);
  fs::create_directories(config.output_dir);
  const std::size_t n = manifest.entries.size();
  log_message(LogLevel::kInfo, "aggregate: " + std::to_string(n) + " images");

  std::vector<double> mean_unc(n, 0.0);
  const std::vector<ImageStatus> status = over_images(manifest, config.jobs, [&](std::size_t i) {
    const ManifestEntry& entry = manifest.entries[i];
    const PredictionStack stack = load_stack(entry);
    const Mask2 pred = aggregate_prediction(stack, config.binarize_iters, config.threshold);
    const UncertaintyMap unc = uncertainty_map(stack, config.p_hi, config.p_lo);

    write_mask(pred, config.output_dir / (entry.image_id + "_pred.png"));
    Tensor3 unc_tensor(1, unc.values.rows(), unc.values.cols());
    unc_tensor.slice(0) = unc.values.cast<float>();
    write_tensor(unc_tensor, config.output_dir / (entry.image_id + "_unc.runc"));

    mean_unc[i] = unc.mean_uncertainty;
    log_message(LogLevel::kDebug, entry.image_id + ": aggregated");
  });

  ordered_json doc;
  doc["threshold"] = config.threshold;
  doc["binarize_iters"] = config.binarize_iters;
  doc["p_hi"] = config.p_hi;
  doc["p_lo"] = config.p_lo;
  ordered_json images = ordered_json::array();
  for (std::size_t i = 0; i < n; ++i) {
    if (!status[i].ok) continue;
    const std::string& id = manifest.entries[i].image_id;
    images.push_back({{"image_id", id},
                      {"mean_uncertainty", mean_unc[i]},
                      {"pred_path", id + "_pred.png"},
                      {"unc_path", id + "_unc.runc"}});
  }
  doc["images"] = images;
  doc["errors"] = errors_json(manifest, status);
  write_json_file(doc, config.output_dir / kAggregateSummaryFile);
  return exit_code(status);
}

// ---------------------------------------------------------------------------
// regions -> records.json

namespace {

ImageRecord compute_record(const ManifestEntry& entry, const RunConfig& config, bool with_dice) {
  const PredictionStack stack = load_stack(entry);
  const Mask2 gt = load_gt(entry, stack);
  const RegionMasks masks = load_regions(entry, gt, config.white_threshold);

  const UncertaintyMap unc = uncertainty_map(stack, config.p_hi, config.p_lo);
  const RegionUncertainties ru = compute_region_uncertainties(unc.values, masks, config.denom);

  ImageRecord record;
  record.image_id = entry.image_id;
  record.x = {ru.overall.value, ru.tumor.value, ru.non_tumor.value, ru.non_tissue.value};
  record.empty = {ru.overall.empty, ru.tumor.empty, ru.non_tumor.empty, ru.non_tissue.empty};
  record.dice = std::numeric_limits<double>::quiet_NaN();
  if (with_dice) {
    const Mask2 pred = aggregate_prediction(stack, config.binarize_iters, config.threshold);
    record.dice = dice(confusion(pred, gt));
  }
  return record;
}

struct RecordsFile {
  DenomConvention denom = DenomConvention::kRegionPixels;
  int white_threshold = 220;
  double p_hi = 67.0;
  double p_lo = 33.0;
  std::vector<ImageRecord> records;  // dice is NaN here; metrics.json carries it
  std::vector<std::pair<std::string, std::string>> errors;
};

RecordsFile load_records_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": invalid JSON: " + e.what());
  }

  RecordsFile out;
  try {
    out.denom = denom_from_string(doc.at("denom_convention").get<std::string>());
    out.white_threshold = doc.at("white_threshold").get<int>();
    out.p_hi = doc.at("p_hi").get<double>();
    out.p_lo = doc.at("p_lo").get<double>();
    for (const auto& row : doc.at("records")) {
      ImageRecord r;
      r.image_id = row.at("image_id").get<std::string>();
      r.dice = std::numeric_limits<double>::quiet_NaN();
      for (std::size_t k = 0; k < 4; ++k) {
        const std::string name = predictor_name(static_cast<Predictor>(k));
        r.x[k] = row.at(name).get<double>();
        r.empty[k] = row.at("empty").at(name).get<bool>();
      }
      out.records.push_back(std::move(r));
    }
    if (doc.contains("errors")) {
      for (const auto& e : doc["errors"]) {
        out.errors.emplace_back(e.at("image_id").get<std::string>(),
                                e.at("error").get<std::string>());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": bad records file: " + e.what());
  }
  return out;
}

}  // namespace

int run_regions(const RunConfig& config) {
  const Manifest manifest = read_manifest(config.manifest_path, false);
  fs::create_directories(config.output_dir);
  const std::size_t n = manifest.entries.size();
  log_message(LogLevel::kInfo, "regions: " + std::to_string(n) + " images");

  std::vector<ImageRecord> records(n);
  const std::vector<ImageStatus> status = over_images(manifest, config.jobs, [&](std::size_t i) {
    records[i] = compute_record(manifest.entries[i], config, /*with_dice=*/false);
  });

  ordered_json doc;
  doc["denom_convention"] = to_string(config.denom);
  doc["white_threshold"] = config.white_threshold;
  doc["p_hi"] = config.p_hi;
  doc["p_lo"] = config.p_lo;
  ordered_json rows = ordered_json::array();
  for (std::size_t i = 0; i < n; ++i) {
    if (!status[i].ok) continue;
    ordered_json row;
    row["image_id"] = records[i].image_id;
    ordered_json empty;
    for (std::size_t k = 0; k < 4; ++k) {
      const std::string name = predictor_name(static_cast<Predictor>(k));
      row[name] = records[i].x[k];
      empty[name] = records[i].empty[k];
    }
    row["empty"] = empty;
    rows.push_back(std::move(row));
  }
  doc["records"] = rows;
  doc["errors"] = errors_json(manifest, status);
  write_json_file(doc, config.output_dir / kRecordsFile);
  return exit_code(status);
}

// ---------------------------------------------------------------------------
// metrics -> metrics.json

namespace {

struct PerImageMetrics {
  double dice = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  double auroc = 0.0;
  bool auroc_defined = false;
  std::string auroc_note;
  std::vector<double> scores;        // pooled-AUROC inputs, kept only on request
  std::vector<std::uint8_t> labels;
};

ordered_json cohort_entry(const std::vector<double>& values, const RunConfig& config) {
  ordered_json e;
  if (values.empty()) {
    e["median"] = nullptr;
    e["ci_lo"] = nullptr;
    e["ci_hi"] = nullptr;
    e["n"] = 0;
    return e;
  }
  e["median"] = median(values);
  const BootstrapInterval ci =
      bootstrap_ci(values, config.n_boot, config.ci_level, config.seed);
  e["ci_lo"] = ci.lo;
  e["ci_hi"] = ci.hi;
  e["n"] = values.size();
  return e;
}

}  // namespace

int run_metrics(const RunConfig& config) {
  const Manifest manifest = read_manifest(config.manifest_path, false);
  fs::create_directories(config.output_dir);
  const std::size_t n = manifest.entries.size();
  log_message(LogLevel::kInfo, "metrics: " + std::to_string(n) + " images");

  std::vector<PerImageMetrics> results(n);
  const std::vector<ImageStatus> status = over_images(manifest, config.jobs, [&](std::size_t i) {
    const ManifestEntry& entry = manifest.entries[i];
    const PredictionStack stack = load_stack(entry);
    const Mask2 gt = load_gt(entry, stack);
    const Mask2 pred = aggregate_prediction(stack, config.binarize_iters, config.threshold);
    const ImageD scores = mean_probability(stack);

    PerImageMetrics& m = results[i];
    const ConfusionCounts c = confusion(pred, gt);
    m.dice = dice(c);
    std::tie(m.tpr, m.fpr) = tpr_fpr(c);
    try {
      m.auroc = auroc(scores, gt);
      m.auroc_defined = true;
    } catch (const std::invalid_argument& e) {
      m.auroc_note = e.what();
    }
    if (config.pooled_auroc) {
      m.scores.reserve(static_cast<std::size_t>(scores.size()));
      m.labels.reserve(static_cast<std::size_t>(scores.size()));
      for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        for (Eigen::Index col = 0; col < scores.cols(); ++col) {
          m.scores.push_back(scores(r, col));
          m.labels.push_back(gt(r, col));
        }
      }
    }
  });

  std::vector<double> dices, tprs, fprs, aurocs;
  for (std::size_t i = 0; i < n; ++i) {
    if (!status[i].ok) continue;
    dices.push_back(results[i].dice);
    tprs.push_back(results[i].tpr);
    fprs.push_back(results[i].fpr);
    if (results[i].auroc_defined) aurocs.push_back(results[i].auroc);
  }

  ordered_json doc;
  doc["seed"] = config.seed;
  doc["n_boot"] = config.n_boot;
  doc["level"] = config.ci_level;
  doc["threshold"] = config.threshold;
  doc["binarize_iters"] = config.binarize_iters;
  ordered_json per_image = ordered_json::array();
  for (std::size_t i = 0; i < n; ++i) {
    if (!status[i].ok) continue;
    const PerImageMetrics& m = results[i];
    ordered_json row;
    row["image_id"] = manifest.entries[i].image_id;
    row["dice"] = m.dice;
    if (m.auroc_defined) {
      row["auroc"] = m.auroc;
    } else {
      row["auroc"] = nullptr;
      row["note"] = m.auroc_note;
    }
    row["tpr"] = m.tpr;
    row["fpr"] = m.fpr;
    per_image.push_back(std::move(row));
  }
  doc["per_image"] = per_image;
  ordered_json cohort;
  cohort["dice"] = cohort_entry(dices, config);
  cohort["auroc"] = cohort_entry(aurocs, config);
  cohort["tpr"] = cohort_entry(tprs, config);
  cohort["fpr"] = cohort_entry(fprs, config);
  doc["cohort"] = cohort;

  if (config.pooled_auroc) {
    std::vector<double> all_scores;
    std::vector<std::uint8_t> all_labels;
    for (std::size_t i = 0; i < n; ++i) {
      if (!status[i].ok) continue;
      all_scores.insert(all_scores.end(), results[i].scores.begin(), results[i].scores.end());
      all_labels.insert(all_labels.end(), results[i].labels.begin(), results[i].labels.end());
    }
    try {
      doc["pooled_auroc"] = auroc(all_scores, all_labels);
    } catch (const std::invalid_argument&) {
      doc["pooled_auroc"] = nullptr;
    }
  }

  doc["errors"] = errors_json(manifest, status);
  write_json_file(doc, config.output_dir / kMetricsFile);
  return exit_code(status);
}

// ---------------------------------------------------------------------------
// fit -> model_<kind>.json x5 + fit_report.md

namespace {

std::map<std::string, double> load_metrics_dice(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": invalid JSON: " + e.what());
  }
  std::map<std::string, double> out;
  try {
    for (const auto& row : doc.at("per_image")) {
      out[row.at("image_id").get<std::string>()] = row.at("dice").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": bad metrics file: " + e.what());
  }
  return out;
}

std::string md_cell(const std::optional<double>& v) {
  return v ? format_g17(*v) : std::string("n/a");
}

std::string fit_report(const std::vector<LinearModel>& models,
                       const std::vector<ImageRecord>& fit_records,
                       const std::vector<std::string>& holdout_ids,
                       const std::vector<double>& holdout_rmses,
                       const std::vector<std::pair<std::string, std::string>>& errors,
                       DenomConvention denom) {
  std::ostringstream md;
  md << "# Dice-from-uncertainty linear models\n\n";
  md << "- records fitted: " << fit_records.size() << "\n";
  md << "- denominator convention: " << to_string(denom) << "\n";
  if (!holdout_ids.empty()) {
    md << "- holdout: " << holdout_ids.size() << " record(s):";
    for (const std::string& id : holdout_ids) md << " " << id;
    md << "\n";
  }
  if (!errors.empty()) {
    md << "- excluded (per-image errors): " << errors.size() << "\n";
  }

  md << "\n## Coefficients\n\n";
  md << "| model | intercept | x1 (tumor) | x2 (non-tumor) | x3 (non-tissue) | x0 (overall) "
        "| rmse |\n";
  md << "|---|---|---|---|---|---|---|\n";
  const Predictor column_order[] = {Predictor::kTumor, Predictor::kNonTumor,
                                    Predictor::kNonTissue, Predictor::kOverall};
  for (const LinearModel& m : models) {
    md << "| " << to_string(m.kind) << " | " << format_g17(m.intercept) << " |";
    for (Predictor p : column_order) {
      std::string cell;
      for (std::size_t k = 0; k < m.predictors.size(); ++k) {
        if (m.predictors[k] == p) cell = format_g17(m.coefficients[k]);
      }
      md << " " << cell << " |";
    }
    md << " " << format_g17(m.rmse) << " |\n";
  }

  std::string dropped_notes;
  for (const LinearModel& m : models) {
    for (std::size_t k = 0; k < m.predictors.size(); ++k) {
      if (m.dropped[k]) {
        dropped_notes += "- " + to_string(m.kind) + ": " + predictor_name(m.predictors[k]) +
                         " (region empty in every record; coefficient reported as 0)\n";
      }
    }
  }
  if (!dropped_notes.empty()) {
    md << "\n## Dropped predictors\n\n" << dropped_notes;
  }

  md << "\n## Rank correlation with Dice\n\n";
  md << "| model | predictor | spearman_rho | p |\n";
  md << "|---|---|---|---|\n";
  for (const LinearModel& m : models) {
    for (std::size_t k = 0; k < m.predictors.size(); ++k) {
      md << "| " << to_string(m.kind) << " | " << predictor_name(m.predictors[k]) << " | "
         << md_cell(m.spearman_rho[k]) << " | " << md_cell(m.spearman_p[k]) << " |\n";
    }
  }

  if (!holdout_ids.empty()) {
    md << "\n## Holdout RMSE\n\n| model | rmse |\n|---|---|\n";
    for (std::size_t i = 0; i < models.size(); ++i) {
      md << "| " << to_string(models[i].kind) << " | " << format_g17(holdout_rmses[i]) << " |\n";
    }
  }

  if (!errors.empty()) {
    md << "\n## Per-image errors\n\n";
    for (const auto& [id, msg] : errors) md << "- " << id << ": " << msg << "\n";
  }
  return md.str();
}

}  // namespace

int run_fit(const FitConfig& config) {
  const RunConfig& run = config.run;
  fs::create_directories(run.output_dir);

  // Build the per-image records and metrics if an earlier command has not
  // already left them in the output directory.
  if (!fs::exists(run.output_dir / kRecordsFile)) {
    log_message(LogLevel::kInfo, "fit: records.json missing, running regions");
    run_regions(run);
  }
  if (!fs::exists(run.output_dir / kMetricsFile)) {
    log_message(LogLevel::kInfo, "fit: metrics.json missing, running metrics");
    run_metrics(run);
  }

  RecordsFile records_file = load_records_file(run.output_dir / kRecordsFile);
  if (records_file.denom != run.denom) {
    throw std::runtime_error(
        "fit: records.json was computed with denom_convention=" + to_string(records_file.denom) +
        " but --denom requests " + to_string(run.denom) +
        "; delete the stale records.json or rerun regions");
  }
  const std::map<std::string, double> dice_by_id =
      load_metrics_dice(run.output_dir / kMetricsFile);

  std::vector<std::pair<std::string, std::string>> errors = records_file.errors;
  std::vector<ImageRecord> usable;
  for (ImageRecord& r : records_file.records) {
    const auto it = dice_by_id.find(r.image_id);
    if (it == dice_by_id.end()) {
      errors.emplace_back(r.image_id, "no dice value in metrics.json");
      continue;
    }
    r.dice = it->second;
    usable.push_back(std::move(r));
  }

  // Split off the requested holdout records.
  std::vector<ImageRecord> fit_records, holdout_records;
  for (ImageRecord& r : usable) {
    const bool held = std::find(config.holdout_ids.begin(), config.holdout_ids.end(),
                                r.image_id) != config.holdout_ids.end();
    (held ? holdout_records : fit_records).push_back(std::move(r));
  }
  if (holdout_records.size() != config.holdout_ids.size()) {
    throw std::invalid_argument("fit: a holdout id does not match any usable record");
  }

  std::vector<LinearModel> models;
  std::vector<double> holdout_rmses;
  std::string fit_errors;
  for (ModelKind kind : all_model_kinds()) {
    try {
      LinearModel model = fit_ols(fit_records, kind, run.denom);
      if (!holdout_records.empty()) {
        std::vector<double> pred, actual;
        for (const ImageRecord& r : holdout_records) {
          pred.push_back(predict_dice(model, r).raw);
          actual.push_back(r.dice);
        }
        holdout_rmses.push_back(rmse(pred, actual));
      }
      write_text_file(model_to_json(model),
                      run.output_dir / ("model_" + to_string(kind) + ".json"));
      models.push_back(std::move(model));
    } catch (const std::exception& e) {
      if (!fit_errors.empty()) fit_errors += "; ";
      fit_errors += to_string(kind) + ": " + e.what();
    }
  }
  if (!fit_errors.empty()) {
    throw std::runtime_error("fit failed: " + fit_errors);
  }

  write_text_file(fit_report(models, fit_records, config.holdout_ids, holdout_rmses, errors,
                             run.denom),
                  run.output_dir / kFitReportFile);
  log_message(LogLevel::kInfo, "fit: wrote " + std::to_string(models.size()) + " models");
  return errors.empty() ? 0 : 1;
}

// ---------------------------------------------------------------------------
// predict -> predictions.csv

int run_predict(const PredictConfig& config) {
  std::ifstream model_in(config.model_path);
  if (!model_in) throw std::runtime_error(config.model_path.string() + ": cannot open");
  std::ostringstream model_text;
  model_text << model_in.rdbuf();
  const LinearModel model = model_from_json(model_text.str());

  const RecordsFile records = load_records_file(config.records_path);
  if (model.denom && *model.denom != records.denom) {
    throw std::runtime_error("predict: model was fitted with denom_convention=" +
                             to_string(*model.denom) + " but records use " +
                             to_string(records.denom));
  }
  if (!model.denom) {
    log_message(LogLevel::kWarn,
                "predict: model does not state a denominator convention; "
                "assuming it matches the records");
  }

  std::ostringstream csv;
  csv << "image_id,predicted_dice_raw,predicted_dice_clamped\n";
  for (const ImageRecord& r : records.records) {
    const DicePrediction p = predict_dice(model, r);
    csv << r.image_id << ',' << format_g17(p.raw) << ',' << format_g17(p.clamped) << '\n';
  }
  if (config.output_path.has_parent_path()) {
    fs::create_directories(config.output_path.parent_path());
  }
  write_text_file(csv.str(), config.output_path);
  log_message(LogLevel::kInfo,
              "predict: " + std::to_string(records.records.size()) + " predictions");
  return 0;
}

// ---------------------------------------------------------------------------
// render -> four heatmaps per image

int run_render(const RunConfig& config) {
  const Manifest manifest = read_manifest(config.manifest_path, false);
  fs::create_directories(config.output_dir);
  log_message(LogLevel::kInfo,
              "render: " + std::to_string(manifest.entries.size()) + " images");

  const std::vector<ImageStatus> status = over_images(manifest, config.jobs, [&](std::size_t i) {
    const ManifestEntry& entry = manifest.entries[i];
    const fs::path unc_path = config.output_dir / (entry.image_id + "_unc.runc");
    if (!fs::exists(unc_path)) {
      throw std::runtime_error("uncertainty map " + unc_path.filename().string() +
                               " not found; run aggregate first");
    }
    const Tensor3 unc_tensor = read_tensor(unc_path);
    if (unc_tensor.iters != 1) {
      throw std::runtime_error("uncertainty map must have a single plane");
    }
    const ImageD map = unc_tensor.slice(0).cast<double>();

    Mask2 gt = read_mask(entry.gt_path);
    require_same_shape(gt, map, "ground truth vs uncertainty map");
    const RegionMasks masks = load_regions(entry, gt, config.white_threshold);

    // One shared scale per image so the four panels are comparable; the floor
    // keeps an all-zero map renderable (uniform blue).
    const double vmax = std::max(1e-6, map.maxCoeff());
    auto masked = [&](const Mask2& region) { return (map * region.cast<double>()).eval(); };
    write_heatmap(map, config.output_dir / (entry.image_id + "_unc_overall.png"), vmax);
    write_heatmap(masked(masks.tumor), config.output_dir / (entry.image_id + "_unc_tumor.png"),
                  vmax);
    write_heatmap(masked(masks.non_tumor),
                  config.output_dir / (entry.image_id + "_unc_nontumor.png"), vmax);
    write_heatmap(masked(masks.non_tissue),
                  config.output_dir / (entry.image_id + "_unc_nontissue.png"), vmax);
  });
  return exit_code(status);
}

}  // namespace roiunc
