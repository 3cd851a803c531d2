#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "partpose/decoder.hpp"
#include "partpose/heatmap.hpp"
#include "partpose/io.hpp"
#include "partpose/rng.hpp"
#include "partpose/scene.hpp"
#include "partpose/skeleton.hpp"

using namespace partpose;

namespace {

bool stacks_equal(const HeatmapStack& a, const HeatmapStack& b) {
  if (!a.same_shape(b)) return false;
  for (size_t c = 0; c < a.channels.size(); ++c)
    for (int i = 0; i < int(a.channels[c].size()); ++i)
      if (a.channels[c].data()[i] != b.channels[c].data()[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("figure template is mirror symmetric") {
  const auto& offs = figure_template();
  REQUIRE(offs.size() == 17);
  // (left, right) keypoint pairs share y and mirror x
  for (int l : {1, 3, 5, 7, 9, 11, 13, 15}) {
    CHECK(offs[l].first == -offs[l + 1].first);
    CHECK(offs[l].second == offs[l + 1].second);
  }
  CHECK(offs[0].first == 0.0);
}

TEST_CASE("droppable keypoints are exactly the tree leaves") {
  const auto leaves = leaf_keypoints(coco17_skeleton());
  CHECK(leaves == std::vector<int>{3, 4, 9, 10, 15, 16});
}

TEST_CASE("generated scenes respect their constraints") {
  const SkeletonSpec spec = coco17_skeleton();
  HarnessConfig hc;
  const double stride = 4.0;
  const double w = hc.grid_w * stride;
  const double h = hc.grid_h * stride;
  Rng rng(512);
  for (int s = 0; s < 50; ++s) {
    Rng scene_rng = rng.child(uint64_t(s));
    const auto poses = gen_scene(scene_rng, spec, hc, stride);
    CHECK(int(poses.size()) >= hc.min_persons);
    CHECK(int(poses.size()) <= hc.max_persons);
    for (const Pose& p : poses) {
      for (const Keypoint& kp : p.keypoints) {
        if (!kp.labeled()) continue;
        CHECK(kp.x >= 0.0);
        CHECK(kp.x <= w - 1.0);
        CHECK(kp.y >= 0.0);
        CHECK(kp.y <= h - 1.0);
      }
      for (const Edge& e : spec.edges) {
        const Keypoint& a = p.keypoints[e.a];
        const Keypoint& b = p.keypoints[e.b];
        if (!a.labeled() || !b.labeled()) continue;
        CHECK(std::hypot(a.x - b.x, a.y - b.y) / stride > hc.min_limb_cells);
      }
    }
  }
}

TEST_CASE("generated persons keep their distance") {
  const SkeletonSpec spec = coco17_skeleton();
  HarnessConfig hc;
  hc.min_persons = 2;
  hc.max_persons = 2;
  hc.min_center_sep = 150.0;
  Rng rng(77);
  for (int s = 0; s < 20; ++s) {
    Rng scene_rng = rng.child(uint64_t(s));
    const auto poses = gen_scene(scene_rng, spec, hc, 4.0);
    REQUIRE(poses.size() == 2);
    // hip midpoints track the sampled centers up to scale and jitter slack
    auto hip_mid = [](const Pose& p) {
      return std::pair{0.5 * (p.keypoints[11].x + p.keypoints[12].x),
                       0.5 * (p.keypoints[11].y + p.keypoints[12].y)};
    };
    const auto [ax, ay] = hip_mid(poses[0]);
    const auto [bx, by] = hip_mid(poses[1]);
    CHECK(std::hypot(ax - bx, ay - by) > 130.0);
  }
}

TEST_CASE("scene generation determinism and the empty case") {
  const SkeletonSpec spec = coco17_skeleton();
  HarnessConfig hc;
  Rng a(42);
  Rng b(42);
  const auto pa = gen_scene(a, spec, hc, 4.0);
  const auto pb = gen_scene(b, spec, hc, 4.0);
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i)
    for (int t = 0; t < 17; ++t) {
      CHECK(pa[i].keypoints[t].x == pb[i].keypoints[t].x);
      CHECK(pa[i].keypoints[t].y == pb[i].keypoints[t].y);
    }

  hc.min_persons = 0;
  hc.max_persons = 0;
  Rng c(42);
  CHECK(gen_scene(c, spec, hc, 4.0).empty());
}

TEST_CASE("leaf drops mark single absent keypoints") {
  const SkeletonSpec spec = coco17_skeleton();
  const auto leaves = leaf_keypoints(spec);
  HarnessConfig hc;
  hc.max_persons = 1;
  hc.drop_prob = 0.9;
  Rng rng(2112);
  int dropped = 0;
  for (int s = 0; s < 40; ++s) {
    Rng scene_rng = rng.child(uint64_t(s));
    const auto poses = gen_scene(scene_rng, spec, hc, 4.0);
    for (const Pose& p : poses) {
      int absent = 0;
      for (int t = 0; t < 17; ++t) {
        if (p.keypoints[t].labeled()) continue;
        ++absent;
        CHECK(std::count(leaves.begin(), leaves.end(), t) == 1);
      }
      CHECK(absent <= 1);
      dropped += absent;
    }
  }
  CHECK(dropped >= 20);
}

TEST_CASE("impossible constraints are reported") {
  const SkeletonSpec spec = coco17_skeleton();
  HarnessConfig hc;
  hc.min_persons = 3;
  hc.max_persons = 3;
  hc.min_center_sep = 2000.0;
  Rng rng(9);
  CHECK_THROWS_AS(gen_scene(rng, spec, hc, 4.0), InfeasibleConstraintsError);

  hc = HarnessConfig{};
  hc.min_limb_cells = 50.0;  // no template limb is ever 200 px long
  Rng r2(9);
  CHECK_THROWS_AS(gen_scene(r2, spec, hc, 4.0), InfeasibleConstraintsError);

  HarnessConfig bad;
  bad.min_persons = -1;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = HarnessConfig{};
  bad.drop_prob = 1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = HarnessConfig{};
  bad.peak_drop = 1.5;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = HarnessConfig{};
  bad.grid_w = 4;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = HarnessConfig{};
  bad.workers = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("zero-rate perturbation is a no-op, draws included") {
  const SkeletonSpec spec = coco17_skeleton();
  HarnessConfig hc;
  hc.max_persons = 2;
  Rng gen(5);
  const auto poses = gen_scene(gen, spec, hc, 4.0);
  const auto original = encode_stack<double>(poses, spec, EncoderConfig{}, 96, 96);

  HeatmapStack touched = original;
  Rng a(123);
  Rng b(123);
  perturb_stack(a, touched, HarnessConfig{}, spec.keypoint_count());
  CHECK(stacks_equal(touched, original));
  CHECK(a.next_u64() == b.next_u64());  // no hidden stream consumption
}

TEST_CASE("value noise stays within range and is seeded") {
  const SkeletonSpec spec = coco17_skeleton();
  HarnessConfig hc;
  Rng gen(6);
  const auto poses = gen_scene(gen, spec, hc, 4.0);
  const auto original = encode_stack<double>(poses, spec, EncoderConfig{}, 96, 96);

  HarnessConfig noise;
  noise.value_sigma = 5.0;  // huge noise exercises both clamp edges
  HeatmapStack x = original;
  Rng ra(321);
  perturb_stack(ra, x, noise, spec.keypoint_count());
  CHECK(!stacks_equal(x, original));
  int at_low = 0, at_high = 0;
  for (const GridD& g : x.channels)
    for (int i = 0; i < int(g.size()); ++i) {
      CHECK(g.data()[i] >= 0.0);
      CHECK(g.data()[i] <= 1.2);
      at_low += g.data()[i] == 0.0 ? 1 : 0;
      at_high += g.data()[i] == 1.2 ? 1 : 0;
    }
  CHECK(at_low > 0);
  CHECK(at_high > 0);

  HeatmapStack y = original;
  Rng rb(321);
  perturb_stack(rb, y, noise, spec.keypoint_count());
  CHECK(stacks_equal(x, y));
}

TEST_CASE("false peaks land as half-to-full spikes") {
  HeatmapStack zero = HeatmapStack::zeros(5, 16, 16, 4.0);
  HarnessConfig noise;
  noise.false_peak_rate = 3.0;
  Rng rng(808);
  perturb_stack(rng, zero, noise, 3);
  int spikes = 0;
  for (const GridD& g : zero.channels)
    for (int i = 0; i < int(g.size()); ++i) {
      if (g.data()[i] == 0.0) continue;
      ++spikes;
      CHECK(g.data()[i] >= 0.5);
      CHECK(g.data()[i] < 1.0);
    }
  CHECK(spikes > 0);
}

TEST_CASE("full peak dropout wipes every keypoint peak") {
  const SkeletonSpec spec = coco17_skeleton();
  HarnessConfig hc;
  hc.min_persons = 2;
  hc.max_persons = 2;
  Rng gen(14);
  const auto poses = gen_scene(gen, spec, hc, 4.0);
  const auto original = encode_stack<double>(poses, spec, EncoderConfig{}, 96, 96);

  HarnessConfig noise;
  noise.peak_drop = 1.0;
  HeatmapStack x = original;
  Rng rng(99);
  perturb_stack(rng, x, noise, spec.keypoint_count());
  for (int c = 0; c < spec.keypoint_count(); ++c)
    CHECK(nms_peaks(x.channels[c], 0.5).empty());
  // part channels are not dropout targets
  for (int c = spec.keypoint_count(); c < x.channel_count(); ++c)
    for (int i = 0; i < int(x.channels[c].size()); ++i)
      CHECK(x.channels[c].data()[i] == original.channels[c].data()[i]);
}

TEST_CASE("perturbation argument validation") {
  HeatmapStack s = HeatmapStack::zeros(4, 8, 8, 4.0);
  Rng rng(1);
  HarnessConfig bad;
  bad.value_sigma = -0.5;
  CHECK_THROWS_AS(perturb_stack(rng, s, bad, 2), ValidationError);
  bad = HarnessConfig{};
  bad.false_peak_rate = -1.0;
  CHECK_THROWS_AS(perturb_stack(rng, s, bad, 2), ValidationError);
  bad = HarnessConfig{};
  bad.peak_drop = 2.0;
  CHECK_THROWS_AS(perturb_stack(rng, s, bad, 2), ValidationError);
  CHECK_THROWS_AS(perturb_stack(rng, s, HarnessConfig{}, 5), DimMismatchError);
}

TEST_CASE("keypoint hit counting") {
  const SkeletonSpec spec = coco17_skeleton();
  HarnessConfig hc;
  hc.min_persons = 2;
  hc.max_persons = 2;
  Rng rng(21);
  const auto truths = gen_scene(rng, spec, hc, 4.0);

  std::vector<Pose> dets = truths;
  dets[0].score = 0.5;
  dets[1].score = 0.9;
  auto [labeled, matched] = keypoint_hits(truths, dets, 4.0);
  CHECK(labeled == 34);
  CHECK(matched == 34);

  // nudge within one cell still counts, beyond one cell does not
  for (auto& kp : dets[0].keypoints) kp.x += 0.9 * 4.0;
  for (auto& kp : dets[1].keypoints) kp.x += 1.5 * 4.0;
  std::tie(labeled, matched) = keypoint_hits(truths, dets, 4.0);
  CHECK(matched == 17);

  auto half = truths;
  half[0].keypoints[15] = {0.0, 0.0, Visibility::absent};
  std::tie(labeled, matched) = keypoint_hits(half, dets, 4.0);
  CHECK(labeled == 33);

  CHECK(keypoint_hits({}, {}, 4.0) == std::pair{0, 0});
}

TEST_CASE("round-trip batches decode cleanly and deterministically") {
  const SkeletonSpec spec = coco17_skeleton();
  HarnessConfig hc;
  hc.scenes = 10;
  hc.workers = 1;
  const RunReport r1 =
      run_roundtrip(spec, EncoderConfig{}, DecoderConfig{}, EvalConfig{}, hc, 31337);

  CHECK(r1.scenes == 10);
  CHECK(r1.person_count_accuracy == 1.0);
  CHECK(r1.keypoint_hit_rate >= 0.99);
  CHECK(r1.eval.ap >= 0.98);
  CHECK(!r1.vacuous);
  CHECK(r1.elapsed_seconds > 0.0);

  int persons = 0, decoded = 0, truth_kp = 0, matched_kp = 0;
  REQUIRE(int(r1.per_scene.size()) == 10);
  for (const SceneOutcome& s : r1.per_scene) {
    persons += s.truth_persons;
    decoded += s.decoded_persons;
    truth_kp += s.truth_keypoints;
    matched_kp += s.matched_keypoints;
    CHECK(s.matched_keypoints <= s.truth_keypoints);
  }
  CHECK(persons == r1.truth_persons);
  CHECK(decoded == r1.decoded_persons);
  CHECK(truth_kp == r1.truth_keypoints);
  CHECK(matched_kp == r1.matched_keypoints);

  // same seed, different pool sizes: byte-identical reports
  hc.workers = 4;
  const RunReport r2 =
      run_roundtrip(spec, EncoderConfig{}, DecoderConfig{}, EvalConfig{}, hc, 31337);
  hc.workers = 3;
  const RunReport r3 =
      run_roundtrip(spec, EncoderConfig{}, DecoderConfig{}, EvalConfig{}, hc, 31337);
  const std::string j1 = report_to_json(r1, false).dump(2);
  CHECK(j1 == report_to_json(r2, false).dump(2));
  CHECK(j1 == report_to_json(r3, false).dump(2));
  CHECK(j1.find("elapsed_seconds") == std::string::npos);
  CHECK(report_to_json(r1, true).dump(2).find("elapsed_seconds") !=
        std::string::npos);
}

TEST_CASE("an all-empty batch reports vacuous metrics") {
  const SkeletonSpec spec = coco17_skeleton();
  HarnessConfig hc;
  hc.min_persons = 0;
  hc.max_persons = 0;
  hc.scenes = 3;
  const RunReport r =
      run_roundtrip(spec, EncoderConfig{}, DecoderConfig{}, EvalConfig{}, hc, 1);
  CHECK(r.vacuous);
  CHECK(r.truth_persons == 0);
  CHECK(r.decoded_persons == 0);
  CHECK(r.person_count_accuracy == 1.0);
  CHECK(r.eval.ap == 0.0);
  CHECK(r.eval.ar == 0.0);
  CHECK(report_to_json(r, false)["vacuous"] == true);
}

TEST_CASE("recall degrades monotonically with peak dropout") {
  const SkeletonSpec spec = coco17_skeleton();
  HarnessConfig hc;
  hc.scenes = 50;
  hc.max_persons = 2;
  hc.workers = 4;

  auto rate_at = [&](double drop) {
    HarnessConfig run = hc;
    run.peak_drop = drop;
    return run_roundtrip(spec, EncoderConfig{}, DecoderConfig{}, EvalConfig{},
                         run, 606)
        .keypoint_hit_rate;
  };
  const double clean = rate_at(0.0);
  const double mild = rate_at(0.4);
  const double heavy = rate_at(0.9);
  CHECK(clean >= mild);
  CHECK(mild >= heavy);
  CHECK(heavy < clean);
  CHECK(clean >= 0.99);

  // light value noise barely dents recovery
  HarnessConfig noisy = hc;
  noisy.scenes = 20;
  noisy.value_sigma = 0.01;
  const RunReport r = run_roundtrip(spec, EncoderConfig{}, DecoderConfig{},
                                    EvalConfig{}, noisy, 707);
  CHECK(r.keypoint_hit_rate >= 0.99);
}
