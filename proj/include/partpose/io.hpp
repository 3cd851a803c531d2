#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "partpose/decoder.hpp"
#include "partpose/errors.hpp"
#include "partpose/focal_loss.hpp"
#include "partpose/heatmap.hpp"
#include "partpose/oks.hpp"
#include "partpose/scene.hpp"
#include "partpose/skeleton.hpp"

namespace partpose {

// Every tunable in one place; JSON config files fill sections of this.
struct AppConfig {
  EncoderConfig encoder;
  LossConfig loss;
  DecoderConfig decoder;
  EvalConfig eval;
  HarnessConfig harness;

  void validate() const {
    encoder.validate();
    loss.validate();
    decoder.validate();
    eval.validate();
    harness.validate();
  }
};

// Binary heatmap container: magic "FHM1", then channels/height/width as
// u32 little-endian, stride as f32 little-endian, then channel-major
// row-major f32 cell data. Structural damage (bad magic, truncation,
// trailing bytes) raises IoError.
void write_stack(const std::string& path, const HeatmapStackF& stack);
HeatmapStackF read_stack(const std::string& path);

nlohmann::json poses_to_json(const std::vector<Pose>& poses);
std::vector<Pose> poses_from_json(const nlohmann::json& j);
void write_poses(const std::string& path, const std::vector<Pose>& poses);
std::vector<Pose> read_poses(const std::string& path);

nlohmann::json skeleton_to_json(const SkeletonSpec& spec);
SkeletonSpec skeleton_from_json(const nlohmann::json& j);
void write_skeleton(const std::string& path, const SkeletonSpec& spec);
SkeletonSpec read_skeleton(const std::string& path);

AppConfig config_from_json(const nlohmann::json& j);
AppConfig read_config(const std::string& path);

nlohmann::json eval_to_json(const EvalResult& result);
nlohmann::json report_to_json(const RunReport& report, bool include_timing);

// Open and parse failures map to IoError and ValidationError respectively.
nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

}  // namespace partpose
