#include "partpose/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "partpose/errors.hpp"

namespace partpose {

namespace {

const std::array<std::array<uint8_t, 3>, 8>& palette() {
  static const std::array<std::array<uint8_t, 3>, 8> colors = {{
      {230, 60, 60},
      {60, 200, 90},
      {70, 110, 240},
      {240, 200, 50},
      {200, 80, 220},
      {70, 210, 210},
      {240, 140, 50},
      {160, 240, 90},
  }};
  return colors;
}

}  // namespace

Image Image::filled(int w, int h, uint8_t value) {
  Image img;
  img.width = w;
  img.height = h;
  img.rgb.assign(size_t(w) * size_t(h) * 3, value);
  return img;
}

void Image::set(int x, int y, const std::array<uint8_t, 3>& color) {
  if (x < 0 || x >= width || y < 0 || y >= height) return;
  const size_t i = (size_t(y) * size_t(width) + size_t(x)) * 3;
  rgb[i] = color[0];
  rgb[i + 1] = color[1];
  rgb[i + 2] = color[2];
}

Image render_stack(const HeatmapStack& stack, int keypoint_channels) {
  if (keypoint_channels < 1 || keypoint_channels > stack.channel_count())
    throw ValidationError("renderer keypoint channel count out of range");
  const int gh = stack.height();
  const int gw = stack.width();
  const int block = std::max(1, int(std::lround(stack.stride)));
  Image img = Image::filled(gw * block, gh * block, 0);
  for (int y = 0; y < gh; ++y) {
    for (int x = 0; x < gw; ++x) {
      double v = 0.0;
      for (int c = 0; c < keypoint_channels; ++c)
        v = std::max(v, double(stack.channels[c](y, x)));
      const auto g = uint8_t(std::clamp(v, 0.0, 1.0) * 255.0);
      for (int by = 0; by < block; ++by)
        for (int bx = 0; bx < block; ++bx)
          img.set(x * block + bx, y * block + by, {g, g, g});
    }
  }
  return img;
}

void draw_line(Image& img, int x0, int y0, int x1, int y1,
               const std::array<uint8_t, 3>& color) {
  const int dx = std::abs(x1 - x0);
  const int dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1;
  const int sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    img.set(x0, y0, color);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void draw_poses(Image& img, const SkeletonSpec& spec,
                const std::vector<Pose>& poses) {
  for (size_t p = 0; p < poses.size(); ++p) {
    const auto& color = palette()[p % palette().size()];
    const Pose& pose = poses[p];
    for (const Edge& e : spec.edges) {
      if (e.a >= int(pose.keypoints.size()) || e.b >= int(pose.keypoints.size()))
        continue;
      const Keypoint& a = pose.keypoints[e.a];
      const Keypoint& b = pose.keypoints[e.b];
      if (!a.labeled() || !b.labeled()) continue;
      draw_line(img, int(std::lround(a.x)), int(std::lround(a.y)),
                int(std::lround(b.x)), int(std::lround(b.y)), color);
    }
    for (const Keypoint& kp : pose.keypoints) {
      if (!kp.labeled()) continue;
      const int cx = int(std::lround(kp.x));
      const int cy = int(std::lround(kp.y));
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) img.set(cx + dx, cy + dy, color);
    }
  }
}

Image render_overlay(const HeatmapStack& stack, const SkeletonSpec& spec,
                     const std::vector<Pose>& poses) {
  const int kp_channels = std::min(spec.keypoint_count(), stack.channel_count());
  Image img = render_stack(stack, kp_channels);
  draw_poses(img, spec, poses);
  return img;
}

void write_ppm(const std::string& path, const Image& img) {
  if (img.width < 1 || img.height < 1)
    throw ValidationError("cannot write an empty image");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.rgb.data()),
          std::streamsize(img.rgb.size()));
  if (!f) throw IoError("write failed for " + path);
}

}  // namespace partpose
