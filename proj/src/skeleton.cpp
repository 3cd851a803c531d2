#include "partpose/skeleton.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace partpose {

namespace {

// union-find over keypoint indices
struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(int n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  // returns false if already joined
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[b] = a;
    return true;
  }
};

}  // namespace

std::vector<int> validate_skeleton(const SkeletonSpec& spec) {
  const int k = spec.keypoint_count();
  if (k <= 0) throw DanglingEndpointError("skeleton has no keypoints");

  std::set<std::pair<int, int>> seen;
  for (const auto& e : spec.edges) {
    if (e.a < 0 || e.a >= k || e.b < 0 || e.b >= k)
      throw DanglingEndpointError("edge endpoint " + std::to_string(e.a) + "-" +
                                  std::to_string(e.b) + " outside [0, " +
                                  std::to_string(k) + ")");
    if (e.a == e.b)
      throw DanglingEndpointError("self-loop edge at keypoint " +
                                  std::to_string(e.a));
    auto key = std::minmax(e.a, e.b);
    if (!seen.insert(key).second)
      throw DuplicateEdgeError("duplicate edge " + std::to_string(key.first) +
                               "-" + std::to_string(key.second));
  }

  // The tree edges must be acyclic and must connect every keypoint they touch
  // into a single component.
  std::vector<int> tree_edges;
  DisjointSet ds(k);
  std::vector<bool> touched(k, false);
  for (int i = 0; i < spec.edge_count(); ++i) {
    const auto& e = spec.edges[i];
    if (e.redundant) continue;
    tree_edges.push_back(i);
    touched[e.a] = touched[e.b] = true;
    if (!ds.unite(e.a, e.b))
      throw NotATreeError("non-redundant edges contain a cycle through " +
                          std::to_string(e.a) + "-" + std::to_string(e.b));
  }
  int root = -1;
  for (int v = 0; v < k; ++v) {
    if (!touched[v]) continue;
    if (root < 0) root = ds.find(v);
    else if (ds.find(v) != root)
      throw NotATreeError("non-redundant edges leave keypoint " +
                          std::to_string(v) + " disconnected");
  }
  return tree_edges;
}

SkeletonSpec coco17_skeleton() {
  SkeletonSpec s;
  s.keypoint_names = {
      "nose",        "left_eye",   "right_eye",  "left_ear",    "right_ear",
      "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
      "left_wrist",  "right_wrist", "left_hip",  "right_hip",   "left_knee",
      "right_knee",  "left_ankle", "right_ankle"};
  // 16 tree edges in torso-outward order, then the redundant connections.
  s.edges = {
      {0, 5, false},   // nose - left shoulder
      {0, 6, false},   // nose - right shoulder
      {5, 7, false},  {7, 9, false},    // left arm
      {6, 8, false},  {8, 10, false},   // right arm
      {5, 11, false}, {6, 12, false},   // trunk
      {11, 13, false}, {13, 15, false}, // left leg
      {12, 14, false}, {14, 16, false}, // right leg
      {0, 1, false},  {0, 2, false},    // eyes
      {1, 3, false},  {2, 4, false},    // ears
      // redundant connections
      {3, 5, true},    // left ear - left shoulder
      {4, 6, true},    // right ear - right shoulder
      {11, 12, true},  // hip bar
  };
  return s;
}

}  // namespace partpose
