#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "partpose/errors.hpp"
#include "partpose/skeleton.hpp"

namespace partpose {

template <class S>
using Grid = Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using GridF = Grid<float>;
using GridD = Grid<double>;

// Binary annotation mask; 0 marks cells whose annotation is missing.
using MaskMap = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>;

struct EncoderConfig {
  double sigma_k = 9.0;  // keypoint peak spread, image px
  double sigma_p = 7.0;  // body part peak spread, image px
  double thre = 0.01;    // ground-truth truncation threshold
  double stride = 4.0;   // image px per heatmap cell
  int scale_count = 5;   // supervision pyramid depth (stride doubles per level)

  void validate() const {
    if (!(sigma_k > 0.0) || !(sigma_p > 0.0))
      throw ValidationError("encoder sigmas must be positive");
    if (!(thre > 0.0 && thre < 1.0))
      throw ValidationError("encoder thre must lie in (0, 1)");
    if (!(stride >= 1.0)) throw ValidationError("encoder stride must be >= 1");
    if (scale_count < 1) throw ValidationError("scale_count must be >= 1");
  }
};

// Stack of score channels over one grid: keypoint channels 0..K-1, then body
// part channels K..K+P-1. Ground-truth stacks hold values in [0, 1] with
// everything below thre truncated to exactly 0.
template <class S>
struct HeatmapStackT {
  std::vector<Grid<S>> channels;
  double stride = 1.0;

  int channel_count() const { return int(channels.size()); }
  int height() const { return channels.empty() ? 0 : int(channels[0].rows()); }
  int width() const { return channels.empty() ? 0 : int(channels[0].cols()); }

  static HeatmapStackT zeros(int channel_count, int height, int width,
                             double stride) {
    HeatmapStackT s;
    s.stride = stride;
    s.channels.assign(channel_count, Grid<S>::Zero(height, width));
    return s;
  }

  bool same_shape(const HeatmapStackT& o) const {
    return channel_count() == o.channel_count() && height() == o.height() &&
           width() == o.width();
  }

  template <class T>
  HeatmapStackT<T> cast() const {
    HeatmapStackT<T> out;
    out.stride = stride;
    out.channels.reserve(channels.size());
    for (const auto& c : channels)
      out.channels.push_back(c.template cast<T>());
    return out;
  }
};

using HeatmapStack = HeatmapStackT<double>;
using HeatmapStackF = HeatmapStackT<float>;

// Radius at which the unnormalized Gaussian exp(-r^2 / 2 sigma^2) decays to
// thre; beyond it ground-truth values are truncated to 0.
inline double truncation_radius(double sigma, double thre) {
  if (!(thre > 0.0 && thre < 1.0))
    throw ValidationError("truncation threshold must lie in (0, 1)");
  if (!(sigma > 0.0)) throw ValidationError("sigma must be positive");
  return sigma * std::sqrt(-2.0 * std::log(thre));
}

// Unnormalized Gaussian response of a point peak, evaluated in double no
// matter the storage scalar so that all instantiations share one math path.
inline double point_response(double px, double py, double cx, double cy,
                             double sigma) {
  const double dx = px - cx;
  const double dy = py - cy;
  return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
}

// Capsule response of a limb segment: Gaussian of the distance to the segment
// (perpendicular inside its extent, nearest endpoint beyond it). Coincident
// endpoints degenerate to the point response.
inline double segment_response(double px, double py, double ax, double ay,
                               double bx, double by, double sigma) {
  const double vx = bx - ax;
  const double vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  double cx = ax;
  double cy = ay;
  if (len2 > 0.0) {
    double t = ((px - ax) * vx + (py - ay) * vy) / len2;
    t = std::clamp(t, 0.0, 1.0);
    cx = ax + t * vx;
    cy = ay + t * vy;
  }
  const double dx = px - cx;
  const double dy = py - cy;
  return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
}

namespace detail {

// Cells whose centers fall inside [lo, hi] (image px), clamped to the grid.
inline std::pair<int, int> cell_range(double lo, double hi, double stride,
                                      int count) {
  const double half = stride / 2.0 - 0.5;
  int first = int(std::ceil((lo - half) / stride));
  int last = int(std::floor((hi - half) / stride));
  first = std::max(first, 0);
  last = std::min(last, count - 1);
  return {first, last};
}

template <class S>
void zero_below(Grid<S>& g, double thre) {
  const S t = S(thre);
  for (Eigen::Index i = 0; i < g.size(); ++i)
    if (g.data()[i] < t) g.data()[i] = S(0);
}

}  // namespace detail

// Renders one keypoint channel: per-pixel maximum over all annotated persons
// of the point response, truncated below thre. Only cells within the
// truncation radius of some keypoint are visited; everything outside is
// mathematically below thre and stays 0.
template <class S>
Grid<S> encode_keypoint_channel(const std::vector<Pose>& poses, int kp_index,
                                const EncoderConfig& cfg, int width,
                                int height) {
  Grid<S> g = Grid<S>::Zero(height, width);
  const double reach = truncation_radius(cfg.sigma_k, cfg.thre) + cfg.stride;
  for (const auto& pose : poses) {
    if (kp_index >= int(pose.keypoints.size())) continue;
    const Keypoint& kp = pose.keypoints[kp_index];
    if (!kp.labeled()) continue;
    const auto [x0, x1] =
        detail::cell_range(kp.x - reach, kp.x + reach, cfg.stride, width);
    const auto [y0, y1] =
        detail::cell_range(kp.y - reach, kp.y + reach, cfg.stride, height);
    for (int gy = y0; gy <= y1; ++gy) {
      for (int gx = x0; gx <= x1; ++gx) {
        const auto [ix, iy] = map_to_image(double(gx), double(gy), cfg.stride);
        const S v = S(point_response(ix, iy, kp.x, kp.y, cfg.sigma_k));
        if (v > g(gy, gx)) g(gy, gx) = v;
      }
    }
  }
  detail::zero_below(g, cfg.thre);
  return g;
}

// Renders one body part channel from the capsule response of the limb
// segment. A pose contributes only when both endpoints are labeled.
template <class S>
Grid<S> encode_part_channel(const std::vector<Pose>& poses, const Edge& edge,
                            const EncoderConfig& cfg, int width, int height) {
  Grid<S> g = Grid<S>::Zero(height, width);
  const double reach = truncation_radius(cfg.sigma_p, cfg.thre) + cfg.stride;
  for (const auto& pose : poses) {
    if (edge.a >= int(pose.keypoints.size()) ||
        edge.b >= int(pose.keypoints.size()))
      continue;
    const Keypoint& ka = pose.keypoints[edge.a];
    const Keypoint& kb = pose.keypoints[edge.b];
    if (!ka.labeled() || !kb.labeled()) continue;
    const auto [x0, x1] = detail::cell_range(std::min(ka.x, kb.x) - reach,
                                             std::max(ka.x, kb.x) + reach,
                                             cfg.stride, width);
    const auto [y0, y1] = detail::cell_range(std::min(ka.y, kb.y) - reach,
                                             std::max(ka.y, kb.y) + reach,
                                             cfg.stride, height);
    for (int gy = y0; gy <= y1; ++gy) {
      for (int gx = x0; gx <= x1; ++gx) {
        const auto [ix, iy] = map_to_image(double(gx), double(gy), cfg.stride);
        const S v =
            S(segment_response(ix, iy, ka.x, ka.y, kb.x, kb.y, cfg.sigma_p));
        if (v > g(gy, gx)) g(gy, gx) = v;
      }
    }
  }
  detail::zero_below(g, cfg.thre);
  return g;
}

// Full ground-truth stack: keypoint channels first, part channels after.
template <class S>
HeatmapStackT<S> encode_stack(const std::vector<Pose>& poses,
                              const SkeletonSpec& spec,
                              const EncoderConfig& cfg, int width, int height) {
  validate_skeleton(spec);
  cfg.validate();
  if (width <= 0 || height <= 0)
    throw DimMismatchError("encode grid dims must be positive");
  for (const auto& pose : poses)
    if (int(pose.keypoints.size()) != spec.keypoint_count())
      throw DimMismatchError("pose keypoint count does not match skeleton");
  HeatmapStackT<S> stack;
  stack.stride = cfg.stride;
  stack.channels.reserve(spec.channel_count());
  for (int k = 0; k < spec.keypoint_count(); ++k)
    stack.channels.push_back(
        encode_keypoint_channel<S>(poses, k, cfg, width, height));
  for (const auto& edge : spec.edges)
    stack.channels.push_back(
        encode_part_channel<S>(poses, edge, cfg, width, height));
  return stack;
}

// Mean pooling by an integer factor; the stride grows by the same factor.
template <class S>
HeatmapStackT<S> downsample_stack(const HeatmapStackT<S>& stack, int factor) {
  if (factor < 1) throw IndivisibleDimsError("downsample factor must be >= 1");
  if (factor == 1) return stack;
  const int h = stack.height();
  const int w = stack.width();
  if (h % factor != 0 || w % factor != 0)
    throw IndivisibleDimsError("grid " + std::to_string(w) + "x" +
                               std::to_string(h) + " not divisible by " +
                               std::to_string(factor));
  HeatmapStackT<S> out;
  out.stride = stack.stride * factor;
  out.channels.reserve(stack.channels.size());
  const S inv = S(1) / S(factor * factor);
  for (const auto& c : stack.channels) {
    Grid<S> d(h / factor, w / factor);
    for (int gy = 0; gy < h / factor; ++gy) {
      for (int gx = 0; gx < w / factor; ++gx) {
        S sum = S(0);
        for (int by = 0; by < factor; ++by)
          for (int bx = 0; bx < factor; ++bx)
            sum += c(gy * factor + by, gx * factor + bx);
        d(gy, gx) = sum * inv;
      }
    }
    out.channels.push_back(std::move(d));
  }
  return out;
}

// Supervision pyramid: level i is pooled straight from the full-size stack by
// factor 2^i, mirroring how fractional-scale ground truth is produced.
template <class S>
std::vector<HeatmapStackT<S>> build_pyramid(const HeatmapStackT<S>& full,
                                            int levels) {
  std::vector<HeatmapStackT<S>> pyr;
  pyr.reserve(levels);
  for (int i = 0; i < levels; ++i)
    pyr.push_back(downsample_stack(full, 1 << i));
  return pyr;
}

struct GridRect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
};

// 1 everywhere except inside the missing-annotation rectangles (grid cells).
inline MaskMap build_mask(const std::vector<GridRect>& missing, int width,
                          int height) {
  MaskMap m = MaskMap::Constant(height, width, 1);
  for (const auto& r : missing) {
    const int x0 = std::max(r.x, 0);
    const int y0 = std::max(r.y, 0);
    const int x1 = std::min(r.x + r.w, width);
    const int y1 = std::min(r.y + r.h, height);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) m(y, x) = 0;
  }
  return m;
}

// A pooled cell is masked out when any cell of its block is; missing
// annotations stay missing at every scale.
inline MaskMap downsample_mask(const MaskMap& mask, int factor) {
  if (factor < 1) throw IndivisibleDimsError("downsample factor must be >= 1");
  if (factor == 1) return mask;
  const int h = int(mask.rows());
  const int w = int(mask.cols());
  if (h % factor != 0 || w % factor != 0)
    throw IndivisibleDimsError("mask dims not divisible by factor");
  MaskMap out(h / factor, w / factor);
  for (int gy = 0; gy < h / factor; ++gy) {
    for (int gx = 0; gx < w / factor; ++gx) {
      std::uint8_t v = 1;
      for (int by = 0; by < factor && v; ++by)
        for (int bx = 0; bx < factor && v; ++bx)
          if (mask(gy * factor + by, gx * factor + bx) == 0) v = 0;
      out(gy, gx) = v;
    }
  }
  return out;
}

inline std::vector<MaskMap> build_mask_pyramid(const MaskMap& mask,
                                               int levels) {
  std::vector<MaskMap> pyr;
  pyr.reserve(levels);
  for (int i = 0; i < levels; ++i)
    pyr.push_back(downsample_mask(mask, 1 << i));
  return pyr;
}

}  // namespace partpose
