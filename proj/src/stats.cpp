#include "roiunc/stats.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace roiunc {

std::string predictor_name(Predictor p) {
  switch (p) {
    case Predictor::kOverall: return "x0";
    case Predictor::kTumor: return "x1";
    case Predictor::kNonTumor: return "x2";
    case Predictor::kNonTissue: return "x3";
  }
  throw std::logic_error("bad predictor");
}

Predictor predictor_from_name(const std::string& name) {
  if (name == "x0") return Predictor::kOverall;
  if (name == "x1") return Predictor::kTumor;
  if (name == "x2") return Predictor::kNonTumor;
  if (name == "x3") return Predictor::kNonTissue;
  throw std::invalid_argument("unknown predictor '" + name + "'");
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kFullEq1: return "full_eq1";
    case ModelKind::kTumorEq2i: return "tumor_eq2i";
    case ModelKind::kNonTumorEq2ii: return "nontumor_eq2ii";
    case ModelKind::kNonTissueEq2iii: return "nontissue_eq2iii";
    case ModelKind::kOverallEq3: return "overall_eq3";
  }
  throw std::logic_error("bad model kind");
}

ModelKind model_kind_from_string(const std::string& s) {
  for (ModelKind k : all_model_kinds()) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown model kind '" + s + "'");
}

std::vector<Predictor> predictors_for(ModelKind k) {
  switch (k) {
    case ModelKind::kFullEq1:
      return {Predictor::kTumor, Predictor::kNonTumor, Predictor::kNonTissue};
    case ModelKind::kTumorEq2i: return {Predictor::kTumor};
    case ModelKind::kNonTumorEq2ii: return {Predictor::kNonTumor};
    case ModelKind::kNonTissueEq2iii: return {Predictor::kNonTissue};
    case ModelKind::kOverallEq3: return {Predictor::kOverall};
  }
  throw std::logic_error("bad model kind");
}

const std::vector<ModelKind>& all_model_kinds() {
  static const std::vector<ModelKind> kinds = {
      ModelKind::kFullEq1, ModelKind::kTumorEq2i, ModelKind::kNonTumorEq2ii,
      ModelKind::kNonTissueEq2iii, ModelKind::kOverallEq3};
  return kinds;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });

  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && v[order[j]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const auto n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va == 0.0 || vb == 0.0) throw std::invalid_argument("spearman: constant input");
  return cov / std::sqrt(va * vb);
}

// Continued fraction for the regularized incomplete beta (modified Lentz).
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kFpMin = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

double reg_inc_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                       b * std::log1p(-x);
  const double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

double exact_permutation_p(std::span<const double> xr, std::span<const double> yr,
                           double rho_obs) {
  std::vector<double> perm(yr.begin(), yr.end());
  std::sort(perm.begin(), perm.end());
  const std::size_t n = xr.size();
  const double mx = std::accumulate(xr.begin(), xr.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(perm.begin(), perm.end(), 0.0) / static_cast<double>(n);
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += (xr[i] - mx) * (xr[i] - mx);
    sy += (perm[i] - my) * (perm[i] - my);
  }
  const double norm = std::sqrt(sx * sy);

  // Distinct arrangements of the (possibly tied) rank vector are equally
  // likely under the permutation null, so counting each once is exact.
  std::uint64_t hits = 0, total = 0;
  const double target = std::fabs(rho_obs) - 1e-12;
  do {
    double cov = 0.0;
    for (std::size_t i = 0; i < n; ++i) cov += (xr[i] - mx) * (perm[i] - my);
    if (std::fabs(cov / norm) >= target) ++hits;
    ++total;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

double student_t_two_sided_p(double t, int df) {
  if (df < 1) throw std::invalid_argument("student_t_two_sided_p: df must be >= 1");
  const double nu = static_cast<double>(df);
  return reg_inc_beta(nu / 2.0, 0.5, nu / (nu + t * t));
}

std::pair<double, double> spearman(std::span<const double> x, std::span<const double> y,
                                   SpearmanPValue method) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: length mismatch");
  if (x.size() < 3) throw std::invalid_argument("spearman: need at least 3 samples");

  const std::vector<double> xr = average_ranks(x);
  const std::vector<double> yr = average_ranks(y);
  double rho = pearson(xr, yr);
  rho = std::min(1.0, std::max(-1.0, rho));

  const std::size_t n = x.size();
  if (method == SpearmanPValue::kExactPermutation) {
    if (n > 10) throw std::invalid_argument("spearman: exact permutation limited to n <= 10");
    return {rho, exact_permutation_p(xr, yr, rho)};
  }

  const double one_minus_r2 = (1.0 - rho) * (1.0 + rho);
  if (one_minus_r2 <= 0.0) return {rho, 0.0};
  const double t = rho * std::sqrt(static_cast<double>(n - 2) / one_minus_r2);
  return {rho, student_t_two_sided_p(t, static_cast<int>(n) - 2)};
}

double rmse(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size()) throw std::invalid_argument("rmse: length mismatch");
  if (predicted.empty()) throw std::invalid_argument("rmse: empty input");
  KahanSum acc;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - actual[i];
    acc.add(d * d);
  }
  return std::sqrt(acc.value() / static_cast<double>(predicted.size()));
}

LinearModel fit_ols(std::span<const ImageRecord> records, ModelKind kind, DenomConvention denom) {
  const std::vector<Predictor> preds = predictors_for(kind);
  const std::size_t n = records.size();

  LinearModel model;
  model.kind = kind;
  model.predictors = preds;
  model.denom = denom;
  model.n = static_cast<int>(n);
  model.coefficients.assign(preds.size(), 0.0);
  model.dropped.assign(preds.size(), false);
  model.spearman_rho.assign(preds.size(), std::nullopt);
  model.spearman_p.assign(preds.size(), std::nullopt);
  model.coef_std_errors.assign(preds.size(), std::nullopt);

  // A predictor whose region is empty in every record carries no information;
  // exclude it from the design and report its coefficient as exactly 0.
  std::vector<std::size_t> included;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    bool all_empty = true;
    for (const ImageRecord& r : records) {
      if (!r.predictor_empty(preds[k])) {
        all_empty = false;
        break;
      }
    }
    model.dropped[k] = all_empty;
    if (!all_empty) included.push_back(k);
  }

  const std::size_t p = 1 + included.size();
  if (n <= p) {
    throw std::invalid_argument("fit_ols: insufficient samples (n=" + std::to_string(n) +
                                ", parameters=" + std::to_string(p) + ")");
  }

  Eigen::MatrixXd design(n, p);
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    design(static_cast<Eigen::Index>(i), 0) = 1.0;
    for (std::size_t c = 0; c < included.size(); ++c) {
      design(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c + 1)) =
          records[i].predictor(preds[included[c]]);
    }
    y(static_cast<Eigen::Index>(i)) = records[i].dice;
  }

  // Rank check on the column-scaled design.
  Eigen::MatrixXd scaled = design;
  std::vector<std::string> column_names{"intercept"};
  for (std::size_t c : included) column_names.push_back(predictor_name(preds[c]));
  for (Eigen::Index c = 0; c < scaled.cols(); ++c) {
    const double norm = scaled.col(c).norm();
    if (norm == 0.0) {
      throw std::runtime_error("fit_ols: rank-deficient design, column " +
                               column_names[static_cast<std::size_t>(c)] + " is identically zero");
    }
    scaled.col(c) /= norm;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(scaled, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.singularValues().minCoeff() < 1e-10) {
    const Eigen::VectorXd null_dir = svd.matrixV().col(svd.matrixV().cols() - 1);
    std::string cols;
    for (Eigen::Index c = 0; c < null_dir.size(); ++c) {
      if (std::fabs(null_dir(c)) > 1e-3) {
        if (!cols.empty()) cols += ", ";
        cols += column_names[static_cast<std::size_t>(c)];
      }
    }
    throw std::runtime_error("fit_ols: rank-deficient design, collinear columns: " + cols);
  }

  const Eigen::MatrixXd gram = design.transpose() * design;
  const Eigen::VectorXd rhs = design.transpose() * y;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  const Eigen::VectorXd beta = ldlt.solve(rhs);

  const Eigen::VectorXd residuals = y - design * beta;
  model.intercept = beta(0);
  for (std::size_t c = 0; c < included.size(); ++c) {
    model.coefficients[included[c]] = beta(static_cast<Eigen::Index>(c + 1));
  }

  // Report rmse through the same arithmetic the predict path uses, so
  // re-predicting the fitting set reproduces it bit-exactly.
  std::vector<double> fitted(n), actual(n);
  for (std::size_t i = 0; i < n; ++i) {
    fitted[i] = predict_dice(model, records[i]).raw;
    actual[i] = records[i].dice;
  }
  model.rmse = rmse(fitted, actual);

  // Standard errors from sigma^2 * (X'X)^-1.
  const double sigma2 = residuals.squaredNorm() / static_cast<double>(n - p);
  const Eigen::MatrixXd cov =
      sigma2 * ldlt.solve(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(p),
                                                    static_cast<Eigen::Index>(p)));
  model.intercept_std_error = std::sqrt(std::max(0.0, cov(0, 0)));
  for (std::size_t c = 0; c < included.size(); ++c) {
    const auto d = static_cast<Eigen::Index>(c + 1);
    model.coef_std_errors[included[c]] = std::sqrt(std::max(0.0, cov(d, d)));
  }

  // Per-predictor rank correlation against Dice; unavailable when either
  // side is constant (e.g. a cohort with identical Dice everywhere).
  std::vector<double> dice_vec(n);
  for (std::size_t i = 0; i < n; ++i) dice_vec[i] = records[i].dice;
  for (std::size_t c : included) {
    std::vector<double> xs(n);
    for (std::size_t i = 0; i < n; ++i) xs[i] = records[i].predictor(preds[c]);
    try {
      const auto [rho, pval] = spearman(xs, dice_vec);
      model.spearman_rho[c] = rho;
      model.spearman_p[c] = pval;
    } catch (const std::invalid_argument&) {
      // leave diagnostics absent
    }
  }
  return model;
}

DicePrediction predict_dice(const LinearModel& model, const ImageRecord& record) {
  if (model.predictors.size() != model.coefficients.size()) {
    throw std::invalid_argument("predict_dice: malformed model");
  }
  double value = model.intercept;
  for (std::size_t k = 0; k < model.predictors.size(); ++k) {
    value += model.coefficients[k] * record.predictor(model.predictors[k]);
  }
  return {value, clamp01(value)};
}

namespace {

nlohmann::ordered_json optional_to_json(const std::optional<double>& v) {
  if (v) return *v;
  return nullptr;
}

}  // namespace

std::string model_to_json(const LinearModel& model) {
  nlohmann::ordered_json doc;
  doc["kind"] = to_string(model.kind);
  doc["intercept"] = model.intercept;
  nlohmann::ordered_json coeffs, rho, pval, ses, dropped = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < model.predictors.size(); ++k) {
    const std::string name = predictor_name(model.predictors[k]);
    coeffs[name] = model.coefficients[k];
    rho[name] = optional_to_json(model.spearman_rho[k]);
    pval[name] = optional_to_json(model.spearman_p[k]);
    ses[name] = optional_to_json(model.coef_std_errors[k]);
    if (model.dropped[k]) dropped.push_back(name);
  }
  doc["coefficients"] = coeffs;
  doc["dropped"] = dropped;
  doc["rmse"] = model.rmse;
  doc["spearman"]["rho"] = rho;
  doc["spearman"]["p"] = pval;
  doc["n"] = model.n;
  doc["denom_convention"] = model.denom ? to_string(*model.denom) : "unspecified";
  doc["intercept_std_error"] = model.intercept_std_error;
  doc["coef_std_errors"] = ses;
  return doc.dump(2) + "\n";
}

LinearModel model_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("model JSON parse error: ") + e.what());
  }

  LinearModel model;
  try {
    model.kind = model_kind_from_string(doc.at("kind").get<std::string>());
    model.predictors = predictors_for(model.kind);
    model.intercept = doc.at("intercept").get<double>();
    const auto& coeffs = doc.at("coefficients");
    const std::size_t k = model.predictors.size();
    model.coefficients.assign(k, 0.0);
    model.dropped.assign(k, false);
    model.spearman_rho.assign(k, std::nullopt);
    model.spearman_p.assign(k, std::nullopt);
    model.coef_std_errors.assign(k, std::nullopt);
    for (std::size_t i = 0; i < k; ++i) {
      const std::string name = predictor_name(model.predictors[i]);
      model.coefficients[i] = coeffs.at(name).get<double>();
      if (doc.contains("dropped")) {
        for (const auto& d : doc["dropped"]) {
          if (d.get<std::string>() == name) model.dropped[i] = true;
        }
      }
      if (doc.contains("spearman")) {
        const auto& sp = doc["spearman"];
        if (sp.contains("rho") && sp["rho"].contains(name) && !sp["rho"][name].is_null()) {
          model.spearman_rho[i] = sp["rho"][name].get<double>();
        }
        if (sp.contains("p") && sp["p"].contains(name) && !sp["p"][name].is_null()) {
          model.spearman_p[i] = sp["p"][name].get<double>();
        }
      }
      if (doc.contains("coef_std_errors") && doc["coef_std_errors"].contains(name) &&
          !doc["coef_std_errors"][name].is_null()) {
        model.coef_std_errors[i] = doc["coef_std_errors"][name].get<double>();
      }
    }
    model.rmse = doc.value("rmse", 0.0);
    model.n = doc.value("n", 0);
    model.intercept_std_error = doc.value("intercept_std_error", 0.0);
    const std::string denom = doc.value("denom_convention", "unspecified");
    if (denom == "unspecified") {
      model.denom = std::nullopt;
    } else {
      model.denom = denom_from_string(denom);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("model JSON missing field: ") + e.what());
  }
  return model;
}

}  // namespace roiunc
