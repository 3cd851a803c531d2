#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "partpose/heatmap.hpp"
#include "partpose/skeleton.hpp"

namespace partpose {

struct Image {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> rgb;  // row-major, 3 bytes per pixel

  static Image filled(int w, int h, uint8_t value);
  void set(int x, int y, const std::array<uint8_t, 3>& color);
};

/// Grayscale composite of the first keypoint_channels channels (cell-wise
/// max), scaled up to image resolution with nearest-neighbor blocks.
Image render_stack(const HeatmapStack& stack, int keypoint_channels);

void draw_line(Image& img, int x0, int y0, int x1, int y1,
               const std::array<uint8_t, 3>& color);

/// Skeleton lines and keypoint markers for every pose, one palette color per
/// pose. Keypoints are taken in image coordinates; unlabeled ones are
/// skipped.
void draw_poses(Image& img, const SkeletonSpec& spec,
                const std::vector<Pose>& poses);

Image render_overlay(const HeatmapStack& stack, const SkeletonSpec& spec,
                     const std::vector<Pose>& poses);

/// Binary PPM (P6) writer.
void write_ppm(const std::string& path, const Image& img);

}  // namespace partpose
