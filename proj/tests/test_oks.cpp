#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "partpose/oks.hpp"
#include "partpose/rng.hpp"
#include "partpose/skeleton.hpp"

using namespace partpose;

namespace {

Pose pose17(double cx, double cy, Rng& rng) {
  Pose p;
  p.keypoints.resize(17);
  for (int i = 0; i < 17; ++i)
    p.keypoints[i] = {cx + rng.uniform(-20.0, 20.0),
                      cy + rng.uniform(-30.0, 30.0), Visibility::visible};
  return p;
}

Pose empty17() {
  Pose p;
  p.keypoints.assign(17, {0.0, 0.0, Visibility::absent});
  return p;
}

// Independent AP formulation: walk the achieved recall levels; level k
// contributes the best precision among ranks whose running hit count has
// already reached k.
double ap_oracle(const std::vector<char>& hits, int truth_count) {
  const int n = int(hits.size());
  std::vector<int> tp(n);
  std::vector<double> prec(n);
  int running = 0;
  for (int i = 0; i < n; ++i) {
    running += hits[i] ? 1 : 0;
    tp[i] = running;
    prec[i] = double(running) / double(i + 1);
  }
  double total = 0.0;
  for (int k = 1; k <= running; ++k) {
    double best = 0.0;
    for (int i = 0; i < n; ++i)
      if (tp[i] >= k) best = std::max(best, prec[i]);
    total += best;
  }
  return total / double(truth_count);
}

}  // namespace

TEST_CASE("falloff constants and threshold grid") {
  const auto k = coco_kappas();
  REQUIRE(k.size() == 17);
  CHECK(k[0] == 0.026);
  CHECK(k[11] == 0.107);
  for (double v : k) CHECK(v > 0.0);

  const auto t = default_thresholds();
  REQUIRE(t.size() == 10);
  CHECK(t.front() == 0.50);
  CHECK(t.back() == doctest::Approx(0.95).epsilon(1e-12));
  for (size_t i = 1; i < t.size(); ++i) CHECK(t[i] > t[i - 1]);
}

TEST_CASE("tight box ignores unlabeled keypoints") {
  Pose p = empty17();
  p.keypoints[0] = {0.0, 0.0, Visibility::visible};
  p.keypoints[1] = {4.0, 0.0, Visibility::visible};
  p.keypoints[2] = {4.0, 3.0, Visibility::occluded};  // occluded is labeled
  p.keypoints[3] = {500.0, 500.0, Visibility::absent};
  CHECK(tight_box_area(p) == 12.0);

  CHECK_THROWS_AS(tight_box_area(empty17()), NoLabeledKeypointsError);
}

TEST_CASE("similarity fixtures") {
  const auto kappas = coco_kappas();
  Rng rng(3);
  const Pose truth = pose17(100.0, 100.0, rng);
  CHECK(oks(truth, truth, kappas) == 1.0);

  // every keypoint displaced far beyond the falloff scale
  const double s = std::sqrt(tight_box_area(truth));
  Pose far = truth;
  for (auto& kp : far.keypoints) kp.x += 8.0 * s * 0.107;
  CHECK(oks(far, truth, kappas) < 1e-6);

  // two labeled keypoints, one exact and one at sqrt(2) falloff units
  Pose two = empty17();
  two.keypoints[0] = {10.0, 10.0, Visibility::visible};
  two.keypoints[1] = {20.0, 10.0, Visibility::visible};
  Pose det = two;
  const double area = 25.0;
  det.keypoints[1].x += 5.0 * kappas[1] * std::sqrt(2.0);
  const double v = oks(det, two, kappas, area);
  CHECK(v == doctest::Approx((1.0 + std::exp(-1.0)) / 2.0).epsilon(1e-12));
  CHECK(std::abs(v - 0.6839) < 1e-4);

  // unlabeled truth keypoints don't enter the mean even when the detection
  // is wildly wrong there
  Pose wild = det;
  wild.keypoints[5] = {9999.0, 9999.0, Visibility::visible};
  CHECK(oks(wild, two, kappas, area) == oks(det, two, kappas, area));
}

TEST_CASE("similarity is translation invariant and order symmetric") {
  const auto kappas = coco_kappas();
  Rng rng(11);
  for (int round = 0; round < 30; ++round) {
    const Pose truth = pose17(80.0, 90.0, rng);
    Pose det = pose17(82.0, 88.0, rng);
    const double base = oks(det, truth, kappas);

    Pose t2 = truth;
    Pose d2 = det;
    const double sx = rng.uniform(-500.0, 500.0);
    const double sy = rng.uniform(-500.0, 500.0);
    for (auto& kp : t2.keypoints) {
      kp.x += sx;
      kp.y += sy;
    }
    for (auto& kp : d2.keypoints) {
      kp.x += sx;
      kp.y += sy;
    }
    CHECK(oks(d2, t2, kappas) == doctest::Approx(base).epsilon(1e-9));

    // permuting keypoints together with their constants changes nothing
    std::vector<int> perm(17);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = 16; i > 0; --i)
      std::swap(perm[i], perm[rng.uniform_int(uint64_t(i) + 1)]);
    Pose tp = truth, dp = det;
    std::vector<double> kp(17);
    for (int i = 0; i < 17; ++i) {
      tp.keypoints[i] = truth.keypoints[perm[i]];
      dp.keypoints[i] = det.keypoints[perm[i]];
      kp[i] = kappas[perm[i]];
    }
    CHECK(oks(dp, tp, kp, tight_box_area(truth)) ==
          doctest::Approx(oks(det, truth, kappas, tight_box_area(truth)))
              .epsilon(1e-12));
  }

  Pose short_pose;
  short_pose.keypoints.assign(4, {0.0, 0.0, Visibility::visible});
  CHECK_THROWS_AS(oks(short_pose, short_pose, kappas), DimMismatchError);
  Rng r2(5);
  CHECK_THROWS_AS(oks(pose17(0, 0, r2), empty17(), kappas, 10.0),
                  NoLabeledKeypointsError);
}

TEST_CASE("average precision fixtures") {
  CHECK(average_precision({1, 1}, 2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(average_precision({1, 0}, 2) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(average_precision({0, 1}, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(average_precision({1, 0, 1}, 2) ==
        doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-12));
  CHECK(average_precision({0, 1, 1}, 3) ==
        doctest::Approx(4.0 / 9.0).epsilon(1e-12));
  CHECK(average_precision({}, 5) == 0.0);
  CHECK_THROWS_AS(average_precision({1}, 0), ValidationError);
}

TEST_CASE("average precision agrees with the recall-level oracle") {
  Rng rng(212);
  for (int round = 0; round < 200; ++round) {
    const int n = int(rng.uniform_int(13));
    std::vector<char> hits(n);
    int tp = 0;
    for (int i = 0; i < n; ++i) {
      hits[i] = rng.bernoulli(0.5) ? 1 : 0;
      tp += hits[i];
    }
    const int truth = std::max(1, tp + int(rng.uniform_int(4)));
    CHECK(average_precision(hits, truth) ==
          doctest::Approx(ap_oracle(hits, truth)).epsilon(1e-12));
  }
}

TEST_CASE("per-scene greedy matching") {
  CHECK(match_scene({{0.9}}, 0.5) == std::vector<char>{1});
  CHECK(match_scene({{0.9}}, 0.95) == std::vector<char>{0});
  CHECK(match_scene({}, 0.5).empty());

  // the second detection falls back to the best unmatched truth
  CHECK(match_scene({{0.9, 0.3}, {0.8, 0.7}}, 0.5) ==
        std::vector<char>{1, 1});
  CHECK(match_scene({{0.9, 0.3}, {0.8, 0.7}}, 0.75) ==
        std::vector<char>{1, 0});

  // equal similarities resolve to the smaller truth index
  CHECK(match_scene({{0.8, 0.8}, {0.0, 0.9}}, 0.5) ==
        std::vector<char>{1, 1});
}

TEST_CASE("evaluation of exact detections is perfect") {
  Rng rng(31);
  EvalConfig cfg;
  std::vector<SceneDetections> scenes(2);
  for (int s = 0; s < 2; ++s) {
    for (int p = 0; p < 2 + s; ++p) {
      Pose t = pose17(60.0 + 120.0 * p, 100.0, rng);
      Pose d = t;
      d.score = 0.9 - 0.1 * p;
      scenes[s].truths.push_back(t);
      scenes[s].detections.push_back(d);
    }
  }
  const EvalResult res = evaluate(scenes, cfg);
  CHECK(res.ap == 1.0);
  CHECK(res.ar == 1.0);
  REQUIRE(res.per_threshold.size() == 10);
  for (const ThresholdMetrics& m : res.per_threshold) {
    CHECK(m.ap == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.tp == 5);
    CHECK(m.fp == 0);
  }
}

TEST_CASE("evaluation with no detections scores zero") {
  Rng rng(32);
  SceneDetections scene;
  scene.truths.push_back(pose17(100.0, 100.0, rng));
  const EvalResult res = evaluate({scene}, EvalConfig{});
  CHECK(res.ap == 0.0);
  CHECK(res.ar == 0.0);
  for (const ThresholdMetrics& m : res.per_threshold) {
    CHECK(m.tp == 0);
    CHECK(m.fp == 0);
  }
}

TEST_CASE("a garbage second detection halves the scores") {
  Rng rng(33);
  SceneDetections scene;
  scene.truths.push_back(pose17(80.0, 100.0, rng));
  scene.truths.push_back(pose17(300.0, 100.0, rng));

  Pose perfect = scene.truths[0];
  perfect.score = 0.9;
  Pose garbage = pose17(1000.0, 1000.0, rng);
  garbage.score = 0.5;
  scene.detections = {perfect, garbage};

  const EvalResult res = evaluate({scene}, EvalConfig{});
  for (const ThresholdMetrics& m : res.per_threshold) {
    CHECK(m.ap == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(m.recall == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(m.tp == 1);
    CHECK(m.fp == 1);
  }
  CHECK(res.ap == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(res.ar == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("detections rank globally across scenes") {
  Rng rng(34);
  std::vector<SceneDetections> scenes(2);
  scenes[0].truths.push_back(pose17(100.0, 100.0, rng));
  Pose hit = scenes[0].truths[0];
  hit.score = 0.5;
  scenes[0].detections.push_back(hit);

  scenes[1].truths.push_back(pose17(100.0, 100.0, rng));
  Pose miss = pose17(2000.0, 2000.0, rng);
  miss.score = 0.9;
  scenes[1].detections.push_back(miss);

  // rank order is (miss, hit): precision at the hit is 1/2, so every
  // threshold sees AP = 0.25 against the two truths
  const EvalResult res = evaluate(scenes, EvalConfig{});
  for (const ThresholdMetrics& m : res.per_threshold) {
    CHECK(m.ap == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(m.recall == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("the per-scene detection cap applies before ranking") {
  Rng rng(35);
  SceneDetections scene;
  scene.truths.push_back(pose17(80.0, 100.0, rng));
  scene.truths.push_back(pose17(300.0, 100.0, rng));
  for (int i = 0; i < 2; ++i) {
    Pose d = scene.truths[i];
    d.score = 0.9 - 0.1 * i;
    scene.detections.push_back(d);
  }
  EvalConfig cfg;
  cfg.max_dets = 1;
  const EvalResult res = evaluate({scene}, cfg);
  for (const ThresholdMetrics& m : res.per_threshold) {
    CHECK(m.tp == 1);
    CHECK(m.fp == 0);
    CHECK(m.recall == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("unlabeled truth poses are ignored") {
  Rng rng(36);
  SceneDetections scene;
  scene.truths.push_back(pose17(100.0, 100.0, rng));
  scene.truths.push_back(empty17());
  Pose d = scene.truths[0];
  d.score = 0.8;
  scene.detections.push_back(d);
  const EvalResult res = evaluate({scene}, EvalConfig{});
  CHECK(res.ap == 1.0);
  CHECK(res.ar == 1.0);

  SceneDetections hollow;
  hollow.truths.push_back(empty17());
  CHECK_THROWS_AS(evaluate({hollow}, EvalConfig{}), ValidationError);
}

TEST_CASE("equal-score detections keep their scene-then-index order") {
  Rng rng(37);
  SceneDetections scene;
  scene.truths.push_back(pose17(100.0, 100.0, rng));
  Pose garbage = pose17(2000.0, 2000.0, rng);
  garbage.score = 0.7;
  Pose perfect = scene.truths[0];
  perfect.score = 0.7;

  scene.detections = {garbage, perfect};
  const double ap_garbage_first =
      evaluate({scene}, EvalConfig{}).per_threshold[0].ap;
  CHECK(ap_garbage_first == doctest::Approx(0.5).epsilon(1e-12));

  scene.detections = {perfect, garbage};
  const double ap_perfect_first =
      evaluate({scene}, EvalConfig{}).per_threshold[0].ap;
  CHECK(ap_perfect_first == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("matching a previously unmatched truth never hurts the scores") {
  Rng rng(38);
  for (int round = 0; round < 50; ++round) {
    SceneDetections scene;
    const int persons = 2 + int(rng.uniform_int(2));
    for (int p = 0; p < persons; ++p)
      scene.truths.push_back(pose17(80.0 + 220.0 * p, 100.0, rng));
    // match all but the last truth, plus some garbage
    for (int p = 0; p + 1 < persons; ++p) {
      Pose d = scene.truths[p];
      d.score = rng.uniform(0.3, 1.0);
      scene.detections.push_back(d);
    }
    const int garbage_n = int(rng.uniform_int(3));
    for (int i = 0; i < garbage_n; ++i) {
      Pose g = pose17(5000.0 + 400.0 * i, 5000.0, rng);
      g.score = rng.uniform(0.0, 1.0);
      scene.detections.push_back(g);
    }
    const EvalResult before = evaluate({scene}, EvalConfig{});

    Pose extra = scene.truths[persons - 1];
    extra.score = rng.uniform(0.0, 1.0);
    scene.detections.push_back(extra);
    const EvalResult after = evaluate({scene}, EvalConfig{});

    CHECK(after.ap >= before.ap - 1e-12);
    CHECK(after.ar >= before.ar - 1e-12);
  }
}

TEST_CASE("evaluation configuration validation") {
  Rng rng(39);
  SceneDetections scene;
  scene.truths.push_back(pose17(100.0, 100.0, rng));

  EvalConfig bad;
  bad.max_dets = 0;
  CHECK_THROWS_AS(evaluate({scene}, bad), ValidationError);

  bad = EvalConfig{};
  bad.kappas = {0.1, -0.2};
  CHECK_THROWS_AS(evaluate({scene}, bad), ValidationError);

  bad = EvalConfig{};
  bad.thresholds = {0.5, 0.5};
  CHECK_THROWS_AS(evaluate({scene}, bad), ValidationError);
  bad.thresholds = {0.5, 1.3};
  CHECK_THROWS_AS(evaluate({scene}, bad), ValidationError);

  // kappa count must match the poses
  EvalConfig narrow;
  narrow.kappas = {0.1, 0.1};
  CHECK_THROWS_AS(evaluate({scene}, narrow), DimMismatchError);
}
