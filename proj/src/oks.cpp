#include "partpose/oks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace partpose {

void EvalConfig::validate() const {
  for (double k : kappas)
    if (!(k > 0.0)) throw ValidationError("oks kappas must be > 0");
  for (double t : thresholds)
    if (!(t > 0.0 && t <= 1.0))
      throw ValidationError("oks thresholds must lie in (0, 1]");
  for (size_t i = 1; i < thresholds.size(); ++i)
    if (!(thresholds[i] > thresholds[i - 1]))
      throw ValidationError("oks thresholds must be strictly increasing");
  if (max_dets < 1) throw ValidationError("eval max_dets must be >= 1");
}

std::vector<double> coco_kappas() {
  return {0.026, 0.025, 0.025, 0.035, 0.035, 0.079, 0.079, 0.072, 0.072,
          0.062, 0.062, 0.107, 0.107, 0.087, 0.087, 0.089, 0.089};
}

std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.50 + 0.05 * i);
  return t;
}

double tight_box_area(const Pose& pose) {
  double minx = std::numeric_limits<double>::infinity();
  double miny = minx;
  double maxx = -minx;
  double maxy = -minx;
  bool any = false;
  for (const Keypoint& kp : pose.keypoints) {
    if (!kp.labeled()) continue;
    any = true;
    minx = std::min(minx, kp.x);
    maxx = std::max(maxx, kp.x);
    miny = std::min(miny, kp.y);
    maxy = std::max(maxy, kp.y);
  }
  if (!any)
    throw NoLabeledKeypointsError("pose has no labeled keypoints for its box");
  return (maxx - minx) * (maxy - miny);
}

double oks(const Pose& det, const Pose& truth,
           const std::vector<double>& kappas, double area) {
  if (det.keypoints.size() != kappas.size() ||
      truth.keypoints.size() != kappas.size())
    throw DimMismatchError("pose keypoint count does not match kappas");
  // A degenerate box would turn an exact hit into 0/0; keep the scale
  // strictly positive instead.
  const double scale2 = std::max(area, 1e-12);
  double sum = 0.0;
  int count = 0;
  for (size_t i = 0; i < kappas.size(); ++i) {
    if (!truth.keypoints[i].labeled()) continue;
    const double dx = det.keypoints[i].x - truth.keypoints[i].x;
    const double dy = det.keypoints[i].y - truth.keypoints[i].y;
    const double d2 = dx * dx + dy * dy;
    sum += std::exp(-d2 / (2.0 * scale2 * kappas[i] * kappas[i]));
    ++count;
  }
  if (count == 0)
    throw NoLabeledKeypointsError("truth pose has no labeled keypoints");
  return sum / double(count);
}

double oks(const Pose& det, const Pose& truth,
           const std::vector<double>& kappas) {
  return oks(det, truth, kappas, tight_box_area(truth));
}

double average_precision(const std::vector<char>& hits, int truth_count) {
  if (truth_count <= 0)
    throw ValidationError("average precision needs at least one truth pose");
  const int n = int(hits.size());
  std::vector<double> prec(n);
  int tp = 0;
  for (int i = 0; i < n; ++i) {
    tp += hits[i] ? 1 : 0;
    prec[i] = double(tp) / double(i + 1);
  }
  // Every correct detection contributes one recall step at the best
  // precision seen at or past its rank.
  double ap = 0.0;
  double maxp = 0.0;
  for (int i = n - 1; i >= 0; --i) {
    maxp = std::max(maxp, prec[i]);
    if (hits[i]) ap += maxp;
  }
  return ap / double(truth_count);
}

std::vector<char> match_scene(const std::vector<std::vector<double>>& oks_mat,
                              double threshold) {
  std::vector<char> flags(oks_mat.size(), 0);
  std::vector<char> taken;
  if (!oks_mat.empty()) taken.assign(oks_mat.front().size(), 0);
  for (size_t d = 0; d < oks_mat.size(); ++d) {
    int best = -1;
    double best_oks = -1.0;
    for (size_t g = 0; g < oks_mat[d].size(); ++g) {
      if (taken[g]) continue;
      if (oks_mat[d][g] > best_oks) {
        best_oks = oks_mat[d][g];
        best = int(g);
      }
    }
    if (best >= 0 && best_oks >= threshold) {
      taken[best] = 1;
      flags[d] = 1;
    }
  }
  return flags;
}

EvalResult evaluate(const std::vector<SceneDetections>& scenes,
                    const EvalConfig& cfg) {
  cfg.validate();
  const std::vector<double> kappas =
      cfg.kappas.empty() ? coco_kappas() : cfg.kappas;
  const std::vector<double> thresholds =
      cfg.thresholds.empty() ? default_thresholds() : cfg.thresholds;

  struct ScenePrep {
    std::vector<double> det_scores;           // rank order
    std::vector<std::vector<double>> oks_mat; // [det rank][truth]
  };
  std::vector<ScenePrep> preps;
  int truth_total = 0;
  for (const SceneDetections& scene : scenes) {
    ScenePrep prep;
    std::vector<const Pose*> truths;
    for (const Pose& t : scene.truths) {
      if (t.labeled_count() == 0) continue;
      if (t.keypoints.size() != kappas.size())
        throw DimMismatchError("truth keypoint count does not match kappas");
      truths.push_back(&t);
    }
    truth_total += int(truths.size());

    std::vector<int> order(scene.detections.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int l, int r) {
      return scene.detections[l].score > scene.detections[r].score;
    });
    if (int(order.size()) > cfg.max_dets) order.resize(cfg.max_dets);

    std::vector<double> areas(truths.size());
    for (size_t g = 0; g < truths.size(); ++g)
      areas[g] = tight_box_area(*truths[g]);
    for (int d : order) {
      const Pose& det = scene.detections[d];
      if (det.keypoints.size() != kappas.size())
        throw DimMismatchError("detection keypoint count does not match kappas");
      prep.det_scores.push_back(det.score);
      std::vector<double> row(truths.size());
      for (size_t g = 0; g < truths.size(); ++g)
        row[g] = oks(det, *truths[g], kappas, areas[g]);
      prep.oks_mat.push_back(std::move(row));
    }
    preps.push_back(std::move(prep));
  }
  if (truth_total == 0)
    throw ValidationError("evaluation needs at least one labeled truth pose");

  EvalResult res;
  for (double tau : thresholds) {
    std::vector<std::pair<double, char>> scored;
    for (const ScenePrep& prep : preps) {
      const std::vector<char> flags = match_scene(prep.oks_mat, tau);
      for (size_t d = 0; d < flags.size(); ++d)
        scored.emplace_back(prep.det_scores[d], flags[d]);
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& l, const auto& r) {
                       return l.first > r.first;
                     });
    std::vector<char> hits(scored.size());
    int tp = 0;
    for (size_t i = 0; i < scored.size(); ++i) {
      hits[i] = scored[i].second;
      tp += hits[i] ? 1 : 0;
    }
    ThresholdMetrics m;
    m.threshold = tau;
    m.tp = tp;
    m.fp = int(hits.size()) - tp;
    m.recall = double(tp) / double(truth_total);
    m.ap = average_precision(hits, truth_total);
    res.per_threshold.push_back(m);
  }
  for (const ThresholdMetrics& m : res.per_threshold) {
    res.ap += m.ap;
    res.ar += m.recall;
  }
  res.ap /= double(res.per_threshold.size());
  res.ar /= double(res.per_threshold.size());
  return res;
}

}  // namespace partpose
