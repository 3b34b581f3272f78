#include "deid/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace deid::eval {

void validate(const ScoreSet& s) {
  if (s.legit.empty() || s.impostor.empty()) throw InvalidArgument("score set: legit and impostor lists must be non-empty");
  for (const auto* v : {&s.legit, &s.impostor})
    for (double x : *v)
      if (!std::isfinite(x)) throw InvalidArgument("score set: non-finite score");
}

RocCurve compute_roc(const ScoreSet& s) {
  validate(s);
  std::vector<double> legit = s.legit, imp = s.impostor;
  std::sort(legit.begin(), legit.end(), std::greater<>());
  std::sort(imp.begin(), imp.end(), std::greater<>());
  std::vector<double> thresholds;
  std::merge(legit.begin(), legit.end(), imp.begin(), imp.end(), std::back_inserter(thresholds), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const double nl = static_cast<double>(legit.size()), ni = static_cast<double>(imp.size());
  constexpr double inf = std::numeric_limits<double>::infinity();
  RocCurve roc;
  roc.reserve(thresholds.size() + 2);
  roc.push_back({inf, 0.0, 0.0});
  std::size_t li = 0, ii = 0;
  for (double t : thresholds) {
    while (li < legit.size() && legit[li] >= t) ++li;
    while (ii < imp.size() && imp[ii] >= t) ++ii;
    roc.push_back({t, static_cast<double>(ii) / ni, static_cast<double>(li) / nl});
  }
  roc.push_back({-inf, 1.0, 1.0});
  return roc;
}

double compute_eer(const RocCurve& roc) {
  if (roc.empty()) throw InvalidArgument("compute_eer: empty curve");
  double prev_d = 0.0;
  for (std::size_t i = 0; i < roc.size(); ++i) {
    const double frr = 1.0 - roc[i].ver;
    const double d = roc[i].far - frr;
    if (d >= 0.0) {
      if (d == 0.0 || i == 0) return roc[i].far;
      const double t = -prev_d / (d - prev_d);
      return roc[i - 1].far + t * (roc[i].far - roc[i - 1].far);
    }
    prev_d = d;
  }
  return roc.back().far;
}

double compute_eer(const ScoreSet& s) { return compute_eer(compute_roc(s)); }

double compute_ver_at_far(const RocCurve& roc, double far_target) {
  if (roc.empty()) throw InvalidArgument("compute_ver_at_far: empty curve");
  if (!(far_target >= 0.0 && far_target <= 1.0)) throw InvalidArgument("compute_ver_at_far: target outside [0,1]");
  std::size_t i = 0;
  while (i + 1 < roc.size() && roc[i + 1].far <= far_target) ++i;
  if (roc[i].far == far_target || i + 1 == roc.size()) return roc[i].ver;
  const RocPoint& a = roc[i];
  const RocPoint& b = roc[i + 1];
  const double t = (far_target - a.far) / (b.far - a.far);
  return a.ver + t * (b.ver - a.ver);
}

double compute_ver_at_far(const ScoreSet& s, double far_target) {
  return compute_ver_at_far(compute_roc(s), far_target);
}

double compute_auc(const ScoreSet& s) {
  validate(s);
  std::vector<double> imp = s.impostor;
  std::sort(imp.begin(), imp.end());
  // Integer pair counts keep the result exact up to the final division.
  long long gt = 0, lt = 0, eq = 0;
  for (double l : s.legit) {
    const auto lo = std::lower_bound(imp.begin(), imp.end(), l);
    const auto hi = std::upper_bound(lo, imp.end(), l);
    gt += lo - imp.begin();
    eq += hi - lo;
    lt += imp.end() - hi;
  }
  const double n2 = 2.0 * static_cast<double>(s.legit.size()) * static_cast<double>(imp.size());
  if (gt >= lt) return static_cast<double>(2 * gt + eq) / n2;
  return 1.0 - static_cast<double>(2 * lt + eq) / n2;
}

double trapezoid_area(const RocCurve& roc) {
  double area = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i)
    area += (roc[i].far - roc[i - 1].far) * (roc[i].ver + roc[i - 1].ver) / 2.0;
  return area;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  // Identical values must give exactly 0, which rounding in the mean can break.
  if (std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); })) return 0.0;
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

void summarize(MetricsSummary& m) {
  m.eer_mean = mean(m.eer), m.eer_std = sample_std(m.eer);
  m.ver1_mean = mean(m.ver1), m.ver1_std = sample_std(m.ver1);
  m.auc_mean = mean(m.auc), m.auc_std = sample_std(m.auc);
}

}  // namespace deid::eval
