#pragma once

#include <vector>

#include "partpose/errors.hpp"
#include "partpose/skeleton.hpp"

namespace partpose {

struct EvalConfig {
  std::vector<double> kappas;      // per-keypoint falloff, empty = coco defaults
  std::vector<double> thresholds;  // empty = 0.50, 0.55, ..., 0.95
  int max_dets = 20;               // detections scored per scene, best first

  void validate() const;
};

struct ThresholdMetrics {
  double threshold = 0.0;
  double ap = 0.0;
  double recall = 0.0;
  int tp = 0;
  int fp = 0;
};

struct EvalResult {
  double ap = 0.0;  // mean average precision over thresholds
  double ar = 0.0;  // mean recall over thresholds
  std::vector<ThresholdMetrics> per_threshold;
};

struct SceneDetections {
  std::vector<Pose> truths;
  std::vector<Pose> detections;
};

/// Per-keypoint similarity falloff constants for the 17-point person layout.
std::vector<double> coco_kappas();

/// Threshold grid 0.50 to 0.95 in steps of 0.05.
std::vector<double> default_thresholds();

/// Area of the tight axis-aligned box around the labeled keypoints.
/// Throws NoLabeledKeypointsError when none are labeled.
double tight_box_area(const Pose& pose);

/// Keypoint similarity between a detection and a ground-truth pose:
/// mean of exp(-d^2 / (2 area kappa^2)) over the labeled truth keypoints.
double oks(const Pose& det, const Pose& truth,
           const std::vector<double>& kappas, double area);

/// Same, with the area taken from the truth's tight box.
double oks(const Pose& det, const Pose& truth,
           const std::vector<double>& kappas);

/// Average precision from a rank-ordered hit list (true = correct match)
/// against truth_count positives, using every operating point of the curve.
double average_precision(const std::vector<char>& hits, int truth_count);

/// Greedy matching at one threshold: detections in rank order each take the
/// unmatched truth with the highest similarity, counting as correct only at
/// or above the threshold. Returns one flag per detection.
std::vector<char> match_scene(const std::vector<std::vector<double>>& oks_mat,
                              double threshold);

/// Full evaluation across scenes: per-threshold AP and recall plus their
/// means. Truth poses without labeled keypoints are ignored.
EvalResult evaluate(const std::vector<SceneDetections>& scenes,
                    const EvalConfig& cfg);

}  // namespace partpose
