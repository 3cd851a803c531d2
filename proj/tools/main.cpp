#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

#include "partpose/decoder.hpp"
#include "partpose/errors.hpp"
#include "partpose/focal_loss.hpp"
#include "partpose/heatmap.hpp"
#include "partpose/io.hpp"
#include "partpose/oks.hpp"
#include "partpose/render.hpp"
#include "partpose/rng.hpp"
#include "partpose/scene.hpp"
#include "partpose/skeleton.hpp"

namespace {

using namespace partpose;

struct CommonOpts {
  std::uint64_t seed = 1;
  std::string config_path;
  std::string skeleton_path;

  AppConfig config() const {
    return config_path.empty() ? AppConfig{} : read_config(config_path);
  }

  SkeletonSpec skeleton() const {
    return skeleton_path.empty() ? coco17_skeleton()
                                 : read_skeleton(skeleton_path);
  }
};

void emit_json(const std::string& out_path, const nlohmann::json& j) {
  if (out_path.empty())
    std::cout << j.dump(2) << '\n';
  else
    write_json_file(out_path, j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Body-part heatmap toolkit: synthetic scenes, ground-truth "
               "encoding, greedy multi-person decoding and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();

  CommonOpts common;
  app.add_option("--seed", common.seed, "Random stream seed")
      ->capture_default_str();
  app.add_option("--config", common.config_path, "JSON configuration file");
  app.add_option("--skeleton", common.skeleton_path,
                 "JSON skeleton file (default: built-in 17-point person)");

  // gen
  auto* gen = app.add_subcommand("gen", "Generate one synthetic scene");
  std::string gen_out;
  int gen_index = 0;
  gen->add_option("--out", gen_out, "Output pose JSON file")->required();
  gen->add_option("--index", gen_index, "Scene index within the seed's run")
      ->capture_default_str();
  gen->callback([&]() {
    const AppConfig cfg = common.config();
    const SkeletonSpec spec = common.skeleton();
    Rng rng = Rng(common.seed).child(std::uint64_t(gen_index));
    write_poses(gen_out,
                gen_scene(rng, spec, cfg.harness, cfg.encoder.stride));
  });

  // encode
  auto* encode = app.add_subcommand(
      "encode", "Encode ground-truth poses into a heatmap stack");
  std::string encode_in, encode_out;
  encode->add_option("--poses", encode_in, "Input pose JSON file")->required();
  encode->add_option("--out", encode_out, "Output heatmap stack file")
      ->required();
  encode->callback([&]() {
    const AppConfig cfg = common.config();
    const SkeletonSpec spec = common.skeleton();
    const std::vector<Pose> poses = read_poses(encode_in);
    const HeatmapStack stack = encode_stack<double>(
        poses, spec, cfg.encoder, cfg.harness.grid_w, cfg.harness.grid_h);
    write_stack(encode_out, stack.cast<float>());
  });

  // decode
  auto* decode_cmd =
      app.add_subcommand("decode", "Decode poses from a heatmap stack");
  std::string decode_in, decode_out;
  int decode_top = 0;
  decode_cmd->add_option("--in", decode_in, "Input heatmap stack file")
      ->required();
  decode_cmd->add_option("--out", decode_out, "Output pose JSON file")
      ->required();
  auto* top_opt = decode_cmd->add_option(
      "--top", decode_top, "Keep at most this many poses, best first");
  decode_cmd->callback([&]() {
    AppConfig cfg = common.config();
    const SkeletonSpec spec = common.skeleton();
    if (top_opt->count() > 0) cfg.decoder.top = decode_top;
    cfg.decoder.validate();
    const HeatmapStackF stack = read_stack(decode_in);
    write_poses(decode_out, decode(stack, spec, cfg.decoder).poses);
  });

  // loss-check
  auto* loss_check = app.add_subcommand(
      "loss-check",
      "Compare the analytic loss gradient against finite differences on a "
      "noisy synthetic scene");
  std::string loss_out;
  int loss_pixels = 200;
  double loss_step = 1e-5;
  double loss_noise = 0.05;
  loss_check->add_option("--out", loss_out,
                         "Output JSON file (default: stdout)");
  loss_check->add_option("--pixels", loss_pixels, "Pixels to spot-check")
      ->capture_default_str();
  loss_check->add_option("--step", loss_step, "Finite difference step")
      ->capture_default_str();
  loss_check->add_option("--noise", loss_noise,
                         "Value noise between prediction and ground truth")
      ->capture_default_str();
  loss_check->callback([&]() {
    if (loss_pixels < 1)
      throw ValidationError("loss-check needs at least one pixel");
    if (!(loss_step > 0.0))
      throw ValidationError("loss-check step must be > 0");
    const AppConfig cfg = common.config();
    const SkeletonSpec spec = common.skeleton();
    Rng rng(common.seed);
    const std::vector<Pose> poses =
        gen_scene(rng, spec, cfg.harness, cfg.encoder.stride);
    const HeatmapStack gt = encode_stack<double>(
        poses, spec, cfg.encoder, cfg.harness.grid_w, cfg.harness.grid_h);
    HeatmapStack pred = gt;
    const int k = spec.keypoint_count();
    HarnessConfig noise;
    noise.value_sigma = loss_noise;
    perturb_stack(rng, pred, noise, k);
    const MaskMap mask = build_mask({}, gt.width(), gt.height());

    const double loss = focal_l2(pred, gt, mask, cfg.loss, k);
    double max_rel = 0.0;
    for (int i = 0; i < loss_pixels; ++i) {
      const int c = int(rng.uniform_int(std::uint64_t(gt.channel_count())));
      const int y = int(rng.uniform_int(std::uint64_t(gt.height())));
      const int x = int(rng.uniform_int(std::uint64_t(gt.width())));
      const double w = channel_weight(c, k, cfg.loss.eta);
      const double p = pred.channels[c](y, x);
      const double g = gt.channels[c](y, x);
      const double an = focal_l2_grad_pixel(p, g, w, cfg.loss);
      const double fd = (focal_l2_pixel(p + loss_step, g, w, cfg.loss) -
                         focal_l2_pixel(p - loss_step, g, w, cfg.loss)) /
                        (2.0 * loss_step);
      const double rel = std::abs(fd - an) / std::max(std::abs(an), 1e-8);
      max_rel = std::max(max_rel, rel);
    }
    nlohmann::json j;
    j["loss"] = loss;
    j["max_grad_rel_err"] = max_rel;
    j["pixels_checked"] = loss_pixels;
    emit_json(loss_out, j);
  });

  // roundtrip
  auto* roundtrip = app.add_subcommand(
      "roundtrip", "Generate, encode, decode and score a batch of scenes");
  std::string rt_out;
  int rt_scenes = 0;
  int rt_workers = 0;
  bool rt_timing = false;
  roundtrip->add_option("--out", rt_out, "Report JSON file (default: stdout)");
  auto* rt_scenes_opt =
      roundtrip->add_option("--scenes", rt_scenes, "Scene count override");
  auto* rt_workers_opt =
      roundtrip->add_option("--workers", rt_workers, "Worker thread override");
  roundtrip->add_flag("--timing", rt_timing,
                      "Include wall time in the report");
  double rt_sigma = 0.0, rt_false = 0.0, rt_drop = 0.0;
  auto* rt_sigma_opt = roundtrip->add_option("--value-sigma", rt_sigma,
                                             "Heatmap value noise override");
  auto* rt_false_opt = roundtrip->add_option(
      "--false-peaks", rt_false, "Spurious peaks per channel override");
  auto* rt_drop_opt = roundtrip->add_option(
      "--peak-drop", rt_drop, "Keypoint peak wipe probability override");
  roundtrip->callback([&]() {
    AppConfig cfg = common.config();
    if (rt_scenes_opt->count() > 0) cfg.harness.scenes = rt_scenes;
    if (rt_workers_opt->count() > 0) cfg.harness.workers = rt_workers;
    if (rt_sigma_opt->count() > 0) cfg.harness.value_sigma = rt_sigma;
    if (rt_false_opt->count() > 0) cfg.harness.false_peak_rate = rt_false;
    if (rt_drop_opt->count() > 0) cfg.harness.peak_drop = rt_drop;
    cfg.harness.validate();
    const SkeletonSpec spec = common.skeleton();
    const RunReport report =
        run_roundtrip(spec, cfg.encoder, cfg.decoder, cfg.eval, cfg.harness,
                      common.seed);
    emit_json(rt_out, report_to_json(report, rt_timing));
  });

  // eval
  auto* eval_cmd = app.add_subcommand(
      "eval", "Score detections against ground truth for one scene");
  std::string eval_truth, eval_dets, eval_out;
  eval_cmd->add_option("--truth", eval_truth, "Ground-truth pose JSON file")
      ->required();
  eval_cmd->add_option("--dets", eval_dets, "Detection pose JSON file")
      ->required();
  eval_cmd->add_option("--out", eval_out, "Output JSON file (default: stdout)");
  eval_cmd->callback([&]() {
    const AppConfig cfg = common.config();
    SceneDetections scene;
    scene.truths = read_poses(eval_truth);
    scene.detections = read_poses(eval_dets);
    emit_json(eval_out, eval_to_json(evaluate({scene}, cfg.eval)));
  });

  // render
  auto* render_cmd = app.add_subcommand(
      "render", "Render a heatmap stack (and optionally poses) to a PPM image");
  std::string render_in, render_poses, render_out;
  render_cmd->add_option("--in", render_in, "Input heatmap stack file")
      ->required();
  render_cmd->add_option("--poses", render_poses, "Pose JSON file to overlay");
  render_cmd->add_option("--out", render_out, "Output PPM file")->required();
  render_cmd->callback([&]() {
    const SkeletonSpec spec = common.skeleton();
    const HeatmapStack stack = read_stack(render_in).cast<double>();
    std::vector<Pose> poses;
    if (!render_poses.empty()) poses = read_poses(render_poses);
    write_ppm(render_out, render_overlay(stack, spec, poses));
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
