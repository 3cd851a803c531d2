#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "partpose/errors.hpp"

namespace partpose {

// COCO annotation semantics: 0 = not labeled, 1 = labeled but occluded,
// 2 = labeled and visible. Absent keypoints take part in nothing -- not in
// heatmap rendering, not in the loss mask, not in OKS.
enum class Visibility : std::uint8_t {
  absent = 0,
  occluded = 1,
  visible = 2,
};

struct Keypoint {
  double x = 0.0;  // image px
  double y = 0.0;  // image px
  Visibility v = Visibility::absent;

  bool labeled() const { return v != Visibility::absent; }
};

// One person, ground-truth or decoded. Decoded poses carry the assembly
// score; ground-truth poses may leave it at 0.
struct Pose {
  std::vector<Keypoint> keypoints;
  double score = 0.0;

  int labeled_count() const {
    int n = 0;
    for (const auto& k : keypoints)
      if (k.labeled()) ++n;
    return n;
  }
};

struct Edge {
  int a = 0;
  int b = 0;
  bool redundant = false;
};

// Keypoint taxonomy plus the limb edge list. The non-redundant subset must
// form a spanning tree over the keypoints it touches; redundant edges are
// extra connections used by the decoder to rescue grouping failures.
struct SkeletonSpec {
  std::vector<std::string> keypoint_names;
  std::vector<Edge> edges;

  int keypoint_count() const { return int(keypoint_names.size()); }
  int edge_count() const { return int(edges.size()); }
  int mst_edge_count() const {
    int n = 0;
    for (const auto& e : edges)
      if (!e.redundant) ++n;
    return n;
  }
  int channel_count() const { return keypoint_count() + edge_count(); }
};

struct GridPoint {
  int x = 0;
  int y = 0;
};

// Center of the grid cell (x, y) in image coordinates at stride R.
inline std::pair<double, double> map_to_image(double x, double y, double stride) {
  return {x * stride + stride / 2.0 - 0.5, y * stride + stride / 2.0 - 0.5};
}

inline std::pair<double, double> map_to_image(GridPoint p, double stride) {
  return map_to_image(double(p.x), double(p.y), stride);
}

// Inverse of map_to_image: the cell whose center is nearest, with ties going
// to the higher index. Exact centers recover their grid index exactly.
inline GridPoint grid_from_image(double ix, double iy, double stride) {
  return {int(std::floor((ix - stride / 2.0 + 0.5) / stride + 0.5)),
          int(std::floor((iy - stride / 2.0 + 0.5) / stride + 0.5))};
}

// Checks every SkeletonSpec invariant; throws DuplicateEdgeError,
// DanglingEndpointError or NotATreeError. On success returns the indices of
// the non-redundant (tree) edges.
std::vector<int> validate_skeleton(const SkeletonSpec& spec);

// Default skeleton: the 17 COCO keypoints joined by a 16-edge tree, plus
// three redundant connections (ear-shoulder x2, hip-hip).
SkeletonSpec coco17_skeleton();

}  // namespace partpose
