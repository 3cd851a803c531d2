#include "partpose/scene.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>

namespace partpose {

void HarnessConfig::validate() const {
  if (grid_w < 8 || grid_h < 8)
    throw ValidationError("scene grid must be at least 8x8");
  if (min_persons < 0 || max_persons < min_persons)
    throw ValidationError("scene person range must satisfy 0 <= min <= max");
  if (!(min_scale > 0.0 && max_scale >= min_scale))
    throw ValidationError("scene scale range must satisfy 0 < min <= max");
  if (pos_jitter < 0.0) throw ValidationError("scene pos_jitter must be >= 0");
  if (min_limb_cells < 0.0)
    throw ValidationError("scene min_limb_cells must be >= 0");
  if (min_center_sep < 0.0)
    throw ValidationError("scene min_center_sep must be >= 0");
  if (drop_prob < 0.0 || drop_prob >= 1.0)
    throw ValidationError("scene drop_prob must lie in [0, 1)");
  if (value_sigma < 0.0) throw ValidationError("scene value_sigma must be >= 0");
  if (false_peak_rate < 0.0)
    throw ValidationError("scene false_peak_rate must be >= 0");
  if (peak_drop < 0.0 || peak_drop > 1.0)
    throw ValidationError("scene peak_drop must lie in [0, 1]");
  if (scenes < 1) throw ValidationError("scene count must be >= 1");
  if (workers < 1) throw ValidationError("scene workers must be >= 1");
}

const std::array<std::pair<double, double>, 17>& figure_template() {
  static const std::array<std::pair<double, double>, 17> offsets = {{
      {0.0, -78.0},    // nose
      {12.0, -86.0},   // left eye
      {-12.0, -86.0},  // right eye
      {24.0, -82.0},   // left ear
      {-24.0, -82.0},  // right ear
      {26.0, -48.0},   // left shoulder
      {-26.0, -48.0},  // right shoulder
      {34.0, -10.0},   // left elbow
      {-34.0, -10.0},  // right elbow
      {38.0, 26.0},    // left wrist
      {-38.0, 26.0},   // right wrist
      {16.0, 20.0},    // left hip
      {-16.0, 20.0},   // right hip
      {18.0, 62.0},    // left knee
      {-18.0, 62.0},   // right knee
      {20.0, 102.0},   // left ankle
      {-20.0, 102.0},  // right ankle
  }};
  return offsets;
}

std::vector<int> leaf_keypoints(const SkeletonSpec& spec) {
  std::vector<int> degree(spec.keypoint_count(), 0);
  for (const Edge& e : spec.edges) {
    if (e.redundant) continue;
    ++degree[e.a];
    ++degree[e.b];
  }
  std::vector<int> leaves;
  for (int t = 0; t < spec.keypoint_count(); ++t)
    if (degree[t] == 1) leaves.push_back(t);
  return leaves;
}

std::vector<Pose> gen_scene(Rng& rng, const SkeletonSpec& spec,
                            const HarnessConfig& hc, double stride) {
  hc.validate();
  validate_skeleton(spec);
  const auto& offs = figure_template();
  if (spec.keypoint_count() != int(offs.size()))
    throw ValidationError("scene generator needs the 17-point person layout");

  const double w = hc.grid_w * stride;
  const double h = hc.grid_h * stride;
  const double pad = 2.0;
  double reach_x = 0.0, reach_up = 0.0, reach_down = 0.0;
  for (const auto& [dx, dy] : offs) {
    reach_x = std::max(reach_x, std::abs(dx));
    reach_up = std::max(reach_up, -dy);
    reach_down = std::max(reach_down, dy);
  }
  // Largest scale whose whole figure still fits between the pads.
  const double fit = std::min((w - 1.0 - 2.0 * pad) / (2.0 * reach_x),
                              (h - 1.0 - 2.0 * pad) / (reach_up + reach_down));
  if (!(fit > 0.0))
    throw InfeasibleConstraintsError("scene too small for any figure");
  const double lo = std::min(hc.min_scale, fit);
  const double hi = std::min(hc.max_scale, fit);

  const std::vector<int> leaves = leaf_keypoints(spec);
  const int persons =
      hc.min_persons + int(rng.uniform_int(hc.max_persons - hc.min_persons + 1));

  std::vector<Pose> poses;
  std::vector<std::pair<double, double>> centers;
  for (int p = 0; p < persons; ++p) {
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      const double s = rng.uniform(lo, hi);
      const double cx =
          rng.uniform(pad + reach_x * s, (w - 1.0 - pad) - reach_x * s);
      const double cy =
          rng.uniform(pad + reach_up * s, (h - 1.0 - pad) - reach_down * s);
      bool clear = true;
      for (const auto& [ox, oy] : centers)
        if (std::hypot(cx - ox, cy - oy) < hc.min_center_sep) clear = false;
      if (!clear) continue;

      Pose pose;
      pose.keypoints.resize(offs.size());
      bool inside = true;
      for (size_t t = 0; t < offs.size(); ++t) {
        const double x = cx + offs[t].first * s + rng.normal(0.0, hc.pos_jitter);
        const double y = cy + offs[t].second * s + rng.normal(0.0, hc.pos_jitter);
        if (x < 0.0 || x > w - 1.0 || y < 0.0 || y > h - 1.0) inside = false;
        pose.keypoints[t] = {x, y, Visibility::visible};
      }
      if (!inside) continue;

      bool limbs_ok = true;
      for (const Edge& e : spec.edges) {
        const Keypoint& a = pose.keypoints[e.a];
        const Keypoint& b = pose.keypoints[e.b];
        if (std::hypot(a.x - b.x, a.y - b.y) / stride <= hc.min_limb_cells)
          limbs_ok = false;
      }
      if (!limbs_ok) continue;

      if (!leaves.empty() && rng.bernoulli(hc.drop_prob)) {
        const int t = leaves[size_t(rng.uniform_int(uint64_t(leaves.size())))];
        pose.keypoints[t] = {0.0, 0.0, Visibility::absent};
      }
      centers.emplace_back(cx, cy);
      poses.push_back(std::move(pose));
      placed = true;
    }
    if (!placed)
      throw InfeasibleConstraintsError(
          "could not place person " + std::to_string(p + 1) + " of " +
          std::to_string(persons));
  }
  return poses;
}

void perturb_stack(Rng& rng, HeatmapStack& stack, const HarnessConfig& hc,
                   int keypoint_channels) {
  if (hc.value_sigma < 0.0)
    throw ValidationError("perturbation sigma must be >= 0");
  if (hc.false_peak_rate < 0.0)
    throw ValidationError("perturbation false_peak_rate must be >= 0");
  if (hc.peak_drop < 0.0 || hc.peak_drop > 1.0)
    throw ValidationError("perturbation peak_drop must lie in [0, 1]");
  if (keypoint_channels < 0 || keypoint_channels > stack.channel_count())
    throw DimMismatchError("keypoint channel count exceeds the stack");

  if (hc.value_sigma > 0.0) {
    for (GridD& g : stack.channels)
      for (int y = 0; y < int(g.rows()); ++y)
        for (int x = 0; x < int(g.cols()); ++x)
          g(y, x) =
              std::clamp(g(y, x) + rng.normal(0.0, hc.value_sigma), 0.0, 1.2);
  }

  if (hc.false_peak_rate > 0.0) {
    for (GridD& g : stack.channels) {
      const int n = rng.poisson(hc.false_peak_rate);
      for (int i = 0; i < n; ++i) {
        const int x = int(rng.uniform_int(uint64_t(g.cols())));
        const int y = int(rng.uniform_int(uint64_t(g.rows())));
        g(y, x) = std::max(g(y, x), rng.uniform(0.5, 1.0));
      }
    }
  }

  if (hc.peak_drop > 0.0) {
    for (int c = 0; c < keypoint_channels; ++c) {
      GridD& g = stack.channels[c];
      // peaks found up front so one wipe cannot promote a ring cell into a
      // fresh drop candidate within the same pass
      const auto peaks = nms_peaks(g, 0.5);
      for (const KeypointCandidate& p : peaks) {
        if (!rng.bernoulli(hc.peak_drop)) continue;
        // 7x7 box: past it the default keypoint gaussian has decayed below
        // the 0.5 detection level even when the true point sits half a
        // stride off the peak cell
        for (int y = std::max(0, p.cell.y - 3);
             y <= std::min(int(g.rows()) - 1, p.cell.y + 3); ++y)
          for (int x = std::max(0, p.cell.x - 3);
               x <= std::min(int(g.cols()) - 1, p.cell.x + 3); ++x)
            g(y, x) = 0.0;
      }
    }
  }
}

std::pair<int, int> keypoint_hits(const std::vector<Pose>& truths,
                                  const std::vector<Pose>& dets,
                                  double stride) {
  const std::vector<double> kappas = coco_kappas();
  int labeled = 0;
  for (const Pose& t : truths) labeled += t.labeled_count();

  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int l, int r) {
    return dets[l].score > dets[r].score;
  });

  std::vector<char> taken(truths.size(), 0);
  int matched = 0;
  for (int d : order) {
    int best = -1;
    double best_oks = -1.0;
    for (size_t g = 0; g < truths.size(); ++g) {
      if (taken[g] || truths[g].labeled_count() == 0) continue;
      const double o = oks(dets[d], truths[g], kappas);
      if (o > best_oks) {
        best_oks = o;
        best = int(g);
      }
    }
    if (best < 0) continue;
    taken[best] = 1;
    const Pose& t = truths[best];
    for (size_t k = 0; k < t.keypoints.size(); ++k) {
      if (!t.keypoints[k].labeled()) continue;
      if (!dets[d].keypoints[k].labeled()) continue;
      const double dist = std::hypot(dets[d].keypoints[k].x - t.keypoints[k].x,
                                     dets[d].keypoints[k].y - t.keypoints[k].y);
      if (dist / stride <= 1.0) ++matched;
    }
  }
  return {labeled, matched};
}

RunReport run_roundtrip(const SkeletonSpec& spec, const EncoderConfig& enc,
                        const DecoderConfig& dec, const EvalConfig& ev,
                        const HarnessConfig& hc, uint64_t seed) {
  enc.validate();
  dec.validate();
  ev.validate();
  hc.validate();
  validate_skeleton(spec);

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<SceneDetections> scene_data(hc.scenes);
  std::vector<SceneOutcome> outcomes(hc.scenes);

  std::atomic<int> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto work = [&]() {
    try {
      for (int i = next.fetch_add(1); i < hc.scenes; i = next.fetch_add(1)) {
        Rng rng = Rng(seed).child(uint64_t(i));
        std::vector<Pose> truths = gen_scene(rng, spec, hc, enc.stride);
        HeatmapStack stack =
            encode_stack<double>(truths, spec, enc, hc.grid_w, hc.grid_h);
        perturb_stack(rng, stack, hc, spec.keypoint_count());
        DecodeResult decoded = decode(stack, spec, dec);

        SceneOutcome& out = outcomes[i];
        out.index = i;
        out.truth_persons = int(truths.size());
        out.decoded_persons = int(decoded.poses.size());
        std::tie(out.truth_keypoints, out.matched_keypoints) =
            keypoint_hits(truths, decoded.poses, enc.stride);
        scene_data[i].truths = std::move(truths);
        scene_data[i].detections = std::move(decoded.poses);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(err_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  };

  const int workers = std::min(hc.workers, hc.scenes);
  std::vector<std::thread> pool;
  for (int t = 1; t < workers; ++t) pool.emplace_back(work);
  work();
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  RunReport report;
  report.scenes = hc.scenes;
  report.per_scene = std::move(outcomes);
  int exact_count = 0;
  for (const SceneOutcome& out : report.per_scene) {
    report.truth_persons += out.truth_persons;
    report.decoded_persons += out.decoded_persons;
    report.truth_keypoints += out.truth_keypoints;
    report.matched_keypoints += out.matched_keypoints;
    exact_count += out.truth_persons == out.decoded_persons ? 1 : 0;
  }
  report.person_count_accuracy = double(exact_count) / double(hc.scenes);
  report.keypoint_hit_rate =
      report.truth_keypoints > 0
          ? double(report.matched_keypoints) / double(report.truth_keypoints)
          : 0.0;
  // precision against zero ground-truth persons is undefined; report zeros
  // and say so instead of failing the whole batch
  report.vacuous = report.truth_persons == 0;
  if (!report.vacuous) report.eval = evaluate(scene_data, ev);
  report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

}  // namespace partpose
