#pragma once

// Verification metrics over legitimate / impostor similarity scores.

#include <limits>
#include <vector>

#include "deid/error.hpp"

namespace deid::eval {

struct ScoreSet {
  std::vector<double> legit;
  std::vector<double> impostor;
};

/// Throws InvalidArgument when either list is empty or holds a non-finite value.
void validate(const ScoreSet& s);

struct RocPoint {
  double threshold = 0.0;
  double far = 0.0;  // fraction of impostor scores >= threshold
  double ver = 0.0;  // fraction of legit scores >= threshold

  bool operator==(const RocPoint&) const = default;
};

/// Thresholds sweep +inf, every distinct observed score in descending order,
/// then -inf, so the curve runs from (0,0) to (1,1) with both coordinates
/// non-decreasing.
using RocCurve = std::vector<RocPoint>;

RocCurve compute_roc(const ScoreSet& s);

/// Point where FAR equals FRR = 1 - VER. Between adjacent sweep points both
/// rates are interpolated linearly and the crossing value is returned.
double compute_eer(const ScoreSet& s);
double compute_eer(const RocCurve& roc);

/// VER at the last sweep point with FAR <= target, interpolated linearly
/// toward the next point when the target FAR is not hit exactly.
double compute_ver_at_far(const ScoreSet& s, double far_target = 0.01);
double compute_ver_at_far(const RocCurve& roc, double far_target = 0.01);

/// Mann-Whitney statistic: P(legit > impostor) with ties counted 1/2.
/// Negating every score maps the result to exactly 1 - AUC.
double compute_auc(const ScoreSet& s);

/// Trapezoidal area under a ROC curve.
double trapezoid_area(const RocCurve& roc);

struct MetricsSummary {
  std::vector<double> eer, ver1, auc;  // per fold
  double eer_mean = 0, eer_std = 0;
  double ver1_mean = 0, ver1_std = 0;
  double auc_mean = 0, auc_std = 0;
};

double mean(const std::vector<double>& v);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
double sample_std(const std::vector<double>& v);

/// Fills the means and standard deviations from the per-fold vectors.
void summarize(MetricsSummary& m);

}  // namespace deid::eval
