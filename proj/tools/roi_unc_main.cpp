#include <CLI11.hpp>

#include <cstdio>
#include <map>
#include <string>

#include "roiunc/pipeline.hpp"

namespace {

using roiunc::DenomConvention;
using roiunc::RunConfig;

void add_run_options(CLI::App* cmd, RunConfig& config) {
  cmd->add_option("--manifest", config.manifest_path, "cohort manifest JSON")
      ->required();
  cmd->add_option("--out", config.output_dir, "output directory")->required();
  cmd->add_option("--jobs", config.jobs, "parallel image workers")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

void add_uncertainty_options(CLI::App* cmd, RunConfig& config) {
  cmd->add_option("--p-hi", config.p_hi, "upper spread percentile")
      ->check(CLI::Range(0.0, 100.0))
      ->capture_default_str();
  cmd->add_option("--p-lo", config.p_lo, "lower spread percentile")
      ->check(CLI::Range(0.0, 100.0))
      ->capture_default_str();
}

void add_aggregation_options(CLI::App* cmd, RunConfig& config, bool* raw_mean) {
  cmd->add_option("--threshold", config.threshold, "foreground decision threshold")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd->add_flag("--raw-mean", *raw_mean,
                "average raw probabilities instead of per-iteration decisions");
}

void add_region_options(CLI::App* cmd, RunConfig& config) {
  const std::map<std::string, DenomConvention> denom_names{
      {"region", DenomConvention::kRegionPixels},
      {"region_pixels", DenomConvention::kRegionPixels},
      {"all", DenomConvention::kAllPixels},
      {"all_pixels", DenomConvention::kAllPixels},
  };
  cmd->add_option("--denom", config.denom, "region-mean denominator: region|all")
      ->transform(CLI::CheckedTransformer(denom_names, CLI::ignore_case));
  cmd->add_option("--white-threshold", config.white_threshold,
                  "min(R,G,B) at or above this is background")
      ->check(CLI::Range(0, 256))
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ROI-wise uncertainty for MC-dropout segmentation stacks"};
  app.require_subcommand(1);

  // synth -----------------------------------------------------------------
  roiunc::SynthConfig synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a phantom cohort");
  synth_cmd->add_option("--out", synth.output_dir, "output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "RNG seed")->capture_default_str();
  synth_cmd->add_option("--n-images", synth.n_images, "cohort size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth_cmd->add_option("--rows", synth.rows, "image height")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth_cmd->add_option("--cols", synth.cols, "image width")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth_cmd->add_option("--alpha", synth.alpha, "MC iterations per stack")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth_cmd->add_option("--sigma-t", synth.sigma_tumor, "tumor logit noise")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  synth_cmd->add_option("--sigma-nt", synth.sigma_non_tumor, "non-tumor tissue logit noise")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  synth_cmd->add_option("--sigma-nti", synth.sigma_non_tissue, "background logit noise")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  synth_cmd->add_option("--sweep-lo", synth.sweep_lo, "first noise multiplier")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  synth_cmd->add_option("--sweep-hi", synth.sweep_hi, "last noise multiplier")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  synth_cmd->add_option("--boundary-band", synth.boundary_band,
                        "pixels around region borders that take the max sigma")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  synth_cmd->add_flag("--tumor-free", synth.tumor_free, "generate phantoms without tumor blobs");

  // aggregate ---------------------------------------------------------------
  RunConfig agg;
  bool agg_raw_mean = false;
  CLI::App* agg_cmd =
      app.add_subcommand("aggregate", "MC stacks -> predictions + uncertainty maps");
  add_run_options(agg_cmd, agg);
  add_aggregation_options(agg_cmd, agg, &agg_raw_mean);
  add_uncertainty_options(agg_cmd, agg);

  // regions -----------------------------------------------------------------
  RunConfig reg;
  CLI::App* reg_cmd =
      app.add_subcommand("regions", "per-image region uncertainty records");
  add_run_options(reg_cmd, reg);
  add_uncertainty_options(reg_cmd, reg);
  add_region_options(reg_cmd, reg);

  // metrics -------------------------------------------------------------
  RunConfig met;
  bool met_raw_mean = false;
  CLI::App* met_cmd =
      app.add_subcommand("metrics", "segmentation metrics with bootstrap intervals");
  add_run_options(met_cmd, met);
  add_aggregation_options(met_cmd, met, &met_raw_mean);
  add_uncertainty_options(met_cmd, met);
  met_cmd->add_option("--n-boot", met.n_boot, "bootstrap replicates")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  met_cmd->add_option("--seed", met.seed, "bootstrap RNG seed")->capture_default_str();
  met_cmd->add_flag("--pooled-auroc", met.pooled_auroc,
                    "also report AUROC pooled over all pixels of the cohort");

  // fit -----------------------------------------------------------------
  roiunc::FitConfig fit;
  bool fit_raw_mean = false;
  CLI::App* fit_cmd =
      app.add_subcommand("fit", "fit Dice-vs-uncertainty linear models");
  add_run_options(fit_cmd, fit.run);
  add_aggregation_options(fit_cmd, fit.run, &fit_raw_mean);
  add_uncertainty_options(fit_cmd, fit.run);
  add_region_options(fit_cmd, fit.run);
  fit_cmd->add_option("--n-boot", fit.run.n_boot, "bootstrap replicates")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  fit_cmd->add_option("--seed", fit.run.seed, "bootstrap RNG seed")->capture_default_str();
  fit_cmd->add_option("--holdout", fit.holdout_ids,
                      "image ids excluded from the fit (comma separated)")
      ->delimiter(',');

  // predict ---------------------------------------------------------------
  roiunc::PredictConfig pred;
  std::filesystem::path pred_out_dir;
  CLI::App* pred_cmd =
      app.add_subcommand("predict", "apply a fitted model to region records");
  pred_cmd->add_option("--model", pred.model_path, "model JSON")->required();
  pred_cmd->add_option("--records", pred.records_path,
                       "records JSON (default: <out>/records.json)");
  pred_cmd->add_option("--out", pred_out_dir, "output directory")->required();

  // render ----------------------------------------------------------------
  RunConfig ren;
  CLI::App* ren_cmd = app.add_subcommand("render", "region heatmaps per image");
  add_run_options(ren_cmd, ren);
  add_region_options(ren_cmd, ren);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth_cmd) return roiunc::run_synth(synth);
    if (*agg_cmd) {
      agg.binarize_iters = !agg_raw_mean;
      return roiunc::run_aggregate(agg);
    }
    if (*reg_cmd) return roiunc::run_regions(reg);
    if (*met_cmd) {
      met.binarize_iters = !met_raw_mean;
      return roiunc::run_metrics(met);
    }
    if (*fit_cmd) {
      fit.run.binarize_iters = !fit_raw_mean;
      return roiunc::run_fit(fit);
    }
    if (*pred_cmd) {
      if (pred.records_path.empty()) pred.records_path = pred_out_dir / "records.json";
      pred.output_path = pred_out_dir / "predictions.csv";
      return roiunc::run_predict(pred);
    }
    if (*ren_cmd) return roiunc::run_render(ren);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "roi-unc error: %s\n", e.what());
    return 1;
  }
  return 0;
}
