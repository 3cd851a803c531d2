#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "partpose/decoder.hpp"
#include "partpose/errors.hpp"
#include "partpose/heatmap.hpp"
#include "partpose/oks.hpp"
#include "partpose/rng.hpp"
#include "partpose/skeleton.hpp"

namespace partpose {

struct HarnessConfig {
  int grid_w = 96;
  int grid_h = 96;
  int min_persons = 1;
  int max_persons = 4;
  double min_scale = 0.7;       // figure scale relative to the template
  double max_scale = 1.0;
  double pos_jitter = 1.5;      // per-keypoint placement noise, image px
  double min_limb_cells = 2.0;  // every edge must span more cells than this
  double min_center_sep = 48.0; // image px between person centers
  double drop_prob = 0.0;       // chance a person loses one leaf keypoint
  double value_sigma = 0.0;     // heatmap value noise before decoding
  double false_peak_rate = 0.0; // expected spurious peaks per channel
  double peak_drop = 0.0;       // chance each keypoint peak gets wiped
  int scenes = 100;
  int workers = 1;

  void validate() const;
};

struct SceneOutcome {
  int index = 0;
  int truth_persons = 0;
  int decoded_persons = 0;
  int truth_keypoints = 0;    // labeled
  int matched_keypoints = 0;  // recovered within one cell
};

struct RunReport {
  int scenes = 0;
  int truth_persons = 0;
  int decoded_persons = 0;
  int truth_keypoints = 0;
  int matched_keypoints = 0;
  double person_count_accuracy = 0.0;  // scenes with exact person count
  double keypoint_hit_rate = 0.0;
  bool vacuous = false;  // no ground-truth persons at all; eval left zeroed
  EvalResult eval;
  std::vector<SceneOutcome> per_scene;
  double elapsed_seconds = 0.0;  // wall time, left out of reports by default
};

/// Keypoint offsets of the synthetic figure at scale 1, (dx, dy) in image
/// px with y growing downward, in the 17-point person layout order.
const std::array<std::pair<double, double>, 17>& figure_template();

/// Tree-leaf keypoint types, the only ones the generator may drop.
std::vector<int> leaf_keypoints(const SkeletonSpec& spec);

/// Randomly placed, scaled and jittered figures in image coordinates.
/// Placement retries until persons keep their distance, stay in bounds and
/// every limb spans more than min_limb_cells cells; persistent failure
/// raises InfeasibleConstraintsError.
std::vector<Pose> gen_scene(Rng& rng, const SkeletonSpec& spec,
                            const HarnessConfig& hc, double stride);

/// Heatmap corruption before decoding, in fixed order: clamped gaussian value
/// noise on every cell, spurious single-cell peaks, then wiped neighborhoods
/// around dropped keypoint peaks. All-zero rates draw nothing and leave the
/// stack untouched.
void perturb_stack(Rng& rng, HeatmapStack& stack, const HarnessConfig& hc,
                   int keypoint_channels);

/// Greedy truth/detection matching, then per-keypoint hit counting:
/// (labeled truth keypoints, those recovered within one cell).
std::pair<int, int> keypoint_hits(const std::vector<Pose>& truths,
                                  const std::vector<Pose>& dets,
                                  double stride);

/// Generate, encode, optionally perturb, decode and score hc.scenes scenes.
/// Scene i always runs on the seed's i-th child stream, so the report is
/// identical for any worker count.
RunReport run_roundtrip(const SkeletonSpec& spec, const EncoderConfig& enc,
                        const DecoderConfig& dec, const EvalConfig& ev,
                        const HarnessConfig& hc, uint64_t seed);

}  // namespace partpose
