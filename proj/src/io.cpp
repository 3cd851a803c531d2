#include "partpose/io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

namespace partpose {

namespace {

void put_u32(std::string& buf, uint32_t v) {
  buf.push_back(char(v & 0xffu));
  buf.push_back(char((v >> 8) & 0xffu));
  buf.push_back(char((v >> 16) & 0xffu));
  buf.push_back(char((v >> 24) & 0xffu));
}

void put_f32(std::string& buf, float v) {
  put_u32(buf, std::bit_cast<uint32_t>(v));
}

uint32_t take_u32(const unsigned char* p) {
  return uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) |
         (uint32_t(p[3]) << 24);
}

float take_f32(const unsigned char* p) {
  return std::bit_cast<float>(take_u32(p));
}

using nlohmann::json;

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& ctx) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known)
      throw ValidationError("unknown key \"" + key + "\" in " + ctx);
  }
}

double as_number(const json& v, const std::string& what) {
  if (!v.is_number()) throw ValidationError(what + " must be a number");
  return v.get<double>();
}

int as_int(const json& v, const std::string& what) {
  const double d = as_number(v, what);
  const int i = int(d);
  if (double(i) != d) throw ValidationError(what + " must be an integer");
  return i;
}

bool as_bool(const json& v, const std::string& what) {
  if (!v.is_boolean()) throw ValidationError(what + " must be a boolean");
  return v.get<bool>();
}

std::vector<double> as_number_array(const json& v, const std::string& what) {
  if (!v.is_array()) throw ValidationError(what + " must be an array");
  std::vector<double> out;
  for (size_t i = 0; i < v.size(); ++i)
    out.push_back(as_number(v[i], what + "[" + std::to_string(i) + "]"));
  return out;
}

// Fetch helpers that leave the target untouched when the key is absent.
void opt_num(const json& obj, const char* key, const std::string& ctx,
             double& target) {
  if (obj.contains(key)) target = as_number(obj[key], ctx + "." + key);
}

void opt_int(const json& obj, const char* key, const std::string& ctx,
             int& target) {
  if (obj.contains(key)) target = as_int(obj[key], ctx + "." + key);
}

void opt_bool(const json& obj, const char* key, const std::string& ctx,
              bool& target) {
  if (obj.contains(key)) target = as_bool(obj[key], ctx + "." + key);
}

void opt_vec(const json& obj, const char* key, const std::string& ctx,
             std::vector<double>& target) {
  if (obj.contains(key)) target = as_number_array(obj[key], ctx + "." + key);
}

const json* section(const json& j, const char* name) {
  if (!j.contains(name)) return nullptr;
  if (!j[name].is_object())
    throw ValidationError(std::string("config section \"") + name +
                          "\" must be an object");
  return &j[name];
}

}  // namespace

void write_stack(const std::string& path, const HeatmapStackF& stack) {
  if (stack.channel_count() == 0)
    throw ValidationError("cannot write a stack without channels");
  const int h = stack.height();
  const int w = stack.width();
  for (const GridF& g : stack.channels)
    if (int(g.rows()) != h || int(g.cols()) != w)
      throw DimMismatchError("stack channels disagree on their shape");

  std::string buf;
  buf.reserve(20 + size_t(stack.channel_count()) * size_t(h) * size_t(w) * 4);
  buf.append("FHM1", 4);
  put_u32(buf, uint32_t(stack.channel_count()));
  put_u32(buf, uint32_t(h));
  put_u32(buf, uint32_t(w));
  put_f32(buf, float(stack.stride));
  for (const GridF& g : stack.channels)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) put_f32(buf, g(y, x));

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.write(buf.data(), std::streamsize(buf.size()));
  if (!f) throw IoError("write failed for " + path);
}

HeatmapStackF read_stack(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  if (f.bad()) throw IoError("read failed for " + path);
  const std::string buf = ss.str();

  if (buf.size() < 20) throw IoError("truncated header in " + path);
  if (buf.compare(0, 4, "FHM1") != 0)
    throw IoError("bad magic in " + path);
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  const uint32_t channels = take_u32(p + 4);
  const uint32_t height = take_u32(p + 8);
  const uint32_t width = take_u32(p + 12);
  const float stride = take_f32(p + 16);
  constexpr uint32_t dim_cap = 1u << 20;
  if (channels == 0 || height == 0 || width == 0 || channels > dim_cap ||
      height > dim_cap || width > dim_cap)
    throw IoError("implausible dimensions in " + path);
  const uint64_t cells = uint64_t(channels) * height * width;
  if (cells > (uint64_t(1) << 28))
    throw IoError("implausible dimensions in " + path);
  if (!(std::isfinite(stride) && stride > 0.0f))
    throw IoError("corrupt stride in " + path);
  if (buf.size() != 20 + cells * 4)
    throw IoError(buf.size() < 20 + cells * 4 ? "truncated data in " + path
                                              : "trailing bytes in " + path);

  HeatmapStackF stack = HeatmapStackF::zeros(int(channels), int(height),
                                             int(width), double(stride));
  const unsigned char* q = p + 20;
  for (uint32_t c = 0; c < channels; ++c)
    for (uint32_t y = 0; y < height; ++y)
      for (uint32_t x = 0; x < width; ++x) {
        stack.channels[c](y, x) = take_f32(q);
        q += 4;
      }
  return stack;
}

nlohmann::json poses_to_json(const std::vector<Pose>& poses) {
  json arr = json::array();
  for (const Pose& pose : poses) {
    json kps = json::array();
    for (const Keypoint& kp : pose.keypoints)
      kps.push_back(json::array({kp.x, kp.y, int(kp.v)}));
    json p;
    p["keypoints"] = std::move(kps);
    p["score"] = pose.score;
    arr.push_back(std::move(p));
  }
  return arr;
}

std::vector<Pose> poses_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ValidationError("pose data must be a json array");
  std::vector<Pose> poses;
  for (size_t i = 0; i < j.size(); ++i) {
    const std::string ctx = "pose[" + std::to_string(i) + "]";
    const json& p = j[i];
    if (!p.is_object()) throw ValidationError(ctx + " must be an object");
    check_keys(p, {"keypoints", "score"}, ctx);
    if (!p.contains("keypoints") || !p["keypoints"].is_array())
      throw ValidationError(ctx + ".keypoints must be an array");
    Pose pose;
    const json& kps = p["keypoints"];
    for (size_t k = 0; k < kps.size(); ++k) {
      const std::string kctx = ctx + ".keypoints[" + std::to_string(k) + "]";
      const json& kp = kps[k];
      if (!kp.is_array() || kp.size() != 3)
        throw ValidationError(kctx + " must be an [x, y, v] triple");
      const double x = as_number(kp[0], kctx + ".x");
      const double y = as_number(kp[1], kctx + ".y");
      const int v = as_int(kp[2], kctx + ".v");
      if (v < 0 || v > 2)
        throw ValidationError(kctx + ".v must be 0, 1 or 2");
      pose.keypoints.push_back({x, y, Visibility(uint8_t(v))});
    }
    if (p.contains("score")) pose.score = as_number(p["score"], ctx + ".score");
    poses.push_back(std::move(pose));
  }
  return poses;
}

void write_poses(const std::string& path, const std::vector<Pose>& poses) {
  write_json_file(path, poses_to_json(poses));
}

std::vector<Pose> read_poses(const std::string& path) {
  return poses_from_json(read_json_file(path));
}

nlohmann::json skeleton_to_json(const SkeletonSpec& spec) {
  json j;
  j["keypoints"] = spec.keypoint_names;
  json edges = json::array();
  for (const Edge& e : spec.edges) {
    json je;
    je["a"] = e.a;
    je["b"] = e.b;
    je["redundant"] = e.redundant;
    edges.push_back(std::move(je));
  }
  j["edges"] = std::move(edges);
  return j;
}

SkeletonSpec skeleton_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("skeleton must be a json object");
  check_keys(j, {"keypoints", "edges"}, "skeleton");
  if (!j.contains("keypoints") || !j["keypoints"].is_array())
    throw ValidationError("skeleton.keypoints must be an array of names");
  SkeletonSpec spec;
  std::set<std::string> seen;
  for (size_t i = 0; i < j["keypoints"].size(); ++i) {
    const json& name = j["keypoints"][i];
    if (!name.is_string() || name.get<std::string>().empty())
      throw ValidationError("skeleton.keypoints[" + std::to_string(i) +
                            "] must be a non-empty string");
    if (!seen.insert(name.get<std::string>()).second)
      throw ValidationError("duplicate keypoint name \"" +
                            name.get<std::string>() + "\"");
    spec.keypoint_names.push_back(name.get<std::string>());
  }
  if (!j.contains("edges") || !j["edges"].is_array())
    throw ValidationError("skeleton.edges must be an array");
  for (size_t i = 0; i < j["edges"].size(); ++i) {
    const std::string ctx = "skeleton.edges[" + std::to_string(i) + "]";
    const json& je = j["edges"][i];
    if (!je.is_object()) throw ValidationError(ctx + " must be an object");
    check_keys(je, {"a", "b", "redundant"}, ctx);
    if (!je.contains("a") || !je.contains("b"))
      throw ValidationError(ctx + " needs endpoint indices a and b");
    Edge e;
    e.a = as_int(je["a"], ctx + ".a");
    e.b = as_int(je["b"], ctx + ".b");
    e.redundant = false;
    if (je.contains("redundant"))
      e.redundant = as_bool(je["redundant"], ctx + ".redundant");
    spec.edges.push_back(e);
  }
  validate_skeleton(spec);
  return spec;
}

void write_skeleton(const std::string& path, const SkeletonSpec& spec) {
  write_json_file(path, skeleton_to_json(spec));
}

SkeletonSpec read_skeleton(const std::string& path) {
  return skeleton_from_json(read_json_file(path));
}

AppConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("config must be a json object");
  check_keys(j, {"encoder", "loss", "decoder", "eval", "harness"}, "config");
  AppConfig cfg;
  if (const json* s = section(j, "encoder")) {
    check_keys(*s, {"sigma_k", "sigma_p", "thre", "stride", "scale_count"},
               "encoder");
    opt_num(*s, "sigma_k", "encoder", cfg.encoder.sigma_k);
    opt_num(*s, "sigma_p", "encoder", cfg.encoder.sigma_p);
    opt_num(*s, "thre", "encoder", cfg.encoder.thre);
    opt_num(*s, "stride", "encoder", cfg.encoder.stride);
    opt_int(*s, "scale_count", "encoder", cfg.encoder.scale_count);
  }
  if (const json* s = section(j, "loss")) {
    check_keys(*s, {"alpha", "beta", "thre", "eta", "lambda", "stages"},
               "loss");
    opt_num(*s, "alpha", "loss", cfg.loss.alpha);
    opt_num(*s, "beta", "loss", cfg.loss.beta);
    opt_num(*s, "thre", "loss", cfg.loss.thre);
    opt_num(*s, "eta", "loss", cfg.loss.eta);
    opt_vec(*s, "lambda", "loss", cfg.loss.lambda);
    opt_int(*s, "stages", "loss", cfg.loss.stages);
  }
  if (const json* s = section(j, "decoder")) {
    check_keys(*s,
               {"min_peak_score", "n_samples", "w_part", "w_kp",
                "max_limb_len", "refine", "top"},
               "decoder");
    opt_num(*s, "min_peak_score", "decoder", cfg.decoder.min_peak_score);
    opt_int(*s, "n_samples", "decoder", cfg.decoder.n_samples);
    opt_num(*s, "w_part", "decoder", cfg.decoder.w_part);
    opt_num(*s, "w_kp", "decoder", cfg.decoder.w_kp);
    opt_num(*s, "max_limb_len", "decoder", cfg.decoder.max_limb_len);
    opt_bool(*s, "refine", "decoder", cfg.decoder.refine);
    opt_int(*s, "top", "decoder", cfg.decoder.top);
  }
  if (const json* s = section(j, "eval")) {
    check_keys(*s, {"kappas", "thresholds", "max_dets"}, "eval");
    opt_vec(*s, "kappas", "eval", cfg.eval.kappas);
    opt_vec(*s, "thresholds", "eval", cfg.eval.thresholds);
    opt_int(*s, "max_dets", "eval", cfg.eval.max_dets);
  }
  if (const json* s = section(j, "harness")) {
    check_keys(*s,
               {"grid_w", "grid_h", "min_persons", "max_persons", "min_scale",
                "max_scale", "pos_jitter", "min_limb_cells", "min_center_sep",
                "drop_prob", "value_sigma", "false_peak_rate", "peak_drop",
                "scenes", "workers"},
               "harness");
    opt_int(*s, "grid_w", "harness", cfg.harness.grid_w);
    opt_int(*s, "grid_h", "harness", cfg.harness.grid_h);
    opt_int(*s, "min_persons", "harness", cfg.harness.min_persons);
    opt_int(*s, "max_persons", "harness", cfg.harness.max_persons);
    opt_num(*s, "min_scale", "harness", cfg.harness.min_scale);
    opt_num(*s, "max_scale", "harness", cfg.harness.max_scale);
    opt_num(*s, "pos_jitter", "harness", cfg.harness.pos_jitter);
    opt_num(*s, "min_limb_cells", "harness", cfg.harness.min_limb_cells);
    opt_num(*s, "min_center_sep", "harness", cfg.harness.min_center_sep);
    opt_num(*s, "drop_prob", "harness", cfg.harness.drop_prob);
    opt_num(*s, "value_sigma", "harness", cfg.harness.value_sigma);
    opt_num(*s, "false_peak_rate", "harness", cfg.harness.false_peak_rate);
    opt_num(*s, "peak_drop", "harness", cfg.harness.peak_drop);
    opt_int(*s, "scenes", "harness", cfg.harness.scenes);
    opt_int(*s, "workers", "harness", cfg.harness.workers);
  }
  cfg.validate();
  return cfg;
}

AppConfig read_config(const std::string& path) {
  return config_from_json(read_json_file(path));
}

nlohmann::json eval_to_json(const EvalResult& result) {
  json j;
  j["AP"] = result.ap;
  j["AR"] = result.ar;
  json per = json::array();
  for (const ThresholdMetrics& m : result.per_threshold) {
    json jm;
    jm["threshold"] = m.threshold;
    jm["ap"] = m.ap;
    jm["recall"] = m.recall;
    jm["tp"] = m.tp;
    jm["fp"] = m.fp;
    per.push_back(std::move(jm));
  }
  j["per_threshold"] = std::move(per);
  return j;
}

nlohmann::json report_to_json(const RunReport& report, bool include_timing) {
  json j;
  j["scenes"] = report.scenes;
  j["truth_persons"] = report.truth_persons;
  j["decoded_persons"] = report.decoded_persons;
  j["truth_keypoints"] = report.truth_keypoints;
  j["matched_keypoints"] = report.matched_keypoints;
  j["person_count_accuracy"] = report.person_count_accuracy;
  j["keypoint_hit_rate"] = report.keypoint_hit_rate;
  j["vacuous"] = report.vacuous;
  j["eval"] = eval_to_json(report.eval);
  json per = json::array();
  for (const SceneOutcome& s : report.per_scene) {
    json js;
    js["index"] = s.index;
    js["truth_persons"] = s.truth_persons;
    js["decoded_persons"] = s.decoded_persons;
    js["truth_keypoints"] = s.truth_keypoints;
    js["matched_keypoints"] = s.matched_keypoints;
    per.push_back(std::move(js));
  }
  j["per_scene"] = std::move(per);
  if (include_timing) j["elapsed_seconds"] = report.elapsed_seconds;
  return j;
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ValidationError("invalid json in " + path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << j.dump(2) << '\n';
  if (!f) throw IoError("write failed for " + path);
}

}  // namespace partpose
