#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "roiunc/regions.hpp"

namespace roiunc {

// The four uncertainty predictors: x0 = overall, x1 = tumor, x2 = non-tumor
// tissue, x3 = non-tissue.
enum class Predictor { kOverall = 0, kTumor = 1, kNonTumor = 2, kNonTissue = 3 };

std::string predictor_name(Predictor p);  // "x0".."x3"
Predictor predictor_from_name(const std::string& name);

// One image's Dice plus its four mean uncertainties. empty[k] marks
// predictors whose region held no pixels in this image; their value is 0.
struct ImageRecord {
  std::string image_id;
  double dice = 0.0;
  std::array<double, 4> x{};       // indexed by Predictor
  std::array<bool, 4> empty{};

  double predictor(Predictor p) const { return x[static_cast<std::size_t>(p)]; }
  bool predictor_empty(Predictor p) const { return empty[static_cast<std::size_t>(p)]; }
};

enum class ModelKind { kFullEq1, kTumorEq2i, kNonTumorEq2ii, kNonTissueEq2iii, kOverallEq3 };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);
std::vector<Predictor> predictors_for(ModelKind k);
const std::vector<ModelKind>& all_model_kinds();

// Fitted linear model predicting Dice from uncertainty predictors. All
// per-predictor vectors are aligned with predictors_for(kind). A predictor
// whose region was empty in every record is excluded from the design and
// reported with coefficient exactly 0 (dropped = true, diagnostics absent).
struct LinearModel {
  ModelKind kind = ModelKind::kOverallEq3;
  double intercept = 0.0;
  std::vector<Predictor> predictors;
  std::vector<double> coefficients;
  std::vector<bool> dropped;
  std::vector<std::optional<double>> spearman_rho;
  std::vector<std::optional<double>> spearman_p;
  double rmse = 0.0;
  double intercept_std_error = 0.0;
  std::vector<std::optional<double>> coef_std_errors;
  int n = 0;
  // Which mean denominator produced the training records. Absent for models
  // loaded from external sources that do not state it.
  std::optional<DenomConvention> denom = DenomConvention::kRegionPixels;
};

// Ordinary least squares with intercept via the normal equations, guarded by
// an SVD rank check on the column-scaled design (smallest singular value
// below 1e-10 is an error naming the collinear columns).
LinearModel fit_ols(std::span<const ImageRecord> records, ModelKind kind,
                    DenomConvention denom = DenomConvention::kRegionPixels);

struct DicePrediction {
  double raw = 0.0;
  double clamped = 0.0;
};

DicePrediction predict_dice(const LinearModel& model, const ImageRecord& record);

enum class SpearmanPValue {
  kTApprox,           // two-sided t approximation, t = rho*sqrt((n-2)/(1-rho^2))
  kExactPermutation,  // exact permutation distribution, n <= 10 only
};

// Spearman rank correlation with average ranks for ties. Throws on constant
// input (zero rank variance). |rho| = 1 yields p = 0 under the t method.
std::pair<double, double> spearman(std::span<const double> x, std::span<const double> y,
                                   SpearmanPValue method = SpearmanPValue::kTApprox);

double rmse(std::span<const double> predicted, std::span<const double> actual);

// Two-sided tail probability of Student's t, via the regularized incomplete
// beta function.
double student_t_two_sided_p(double t, int df);

std::string model_to_json(const LinearModel& model);
LinearModel model_from_json(const std::string& text);

}  // namespace roiunc
