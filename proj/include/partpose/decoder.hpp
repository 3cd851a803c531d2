#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "partpose/errors.hpp"
#include "partpose/heatmap.hpp"
#include "partpose/skeleton.hpp"

namespace partpose {

struct DecoderConfig {
  double min_peak_score = 0.1;  // peaks below this are dropped
  int n_samples = 10;           // samples per part segment, endpoints included
  double w_part = 0.5;          // weight of the sampled part response
  double w_kp = 0.5;            // weight of the mean endpoint peak score
  // Candidate pairs farther apart than this many cells are skipped.
  double max_limb_len = std::numeric_limits<double>::infinity();
  bool refine = true;  // quarter-cell peak refinement
  int top = 20;        // poses kept per decode, best first

  void validate() const {
    if (min_peak_score < 0.0)
      throw ValidationError("decoder min_peak_score must be >= 0");
    if (n_samples < 1) throw ValidationError("decoder n_samples must be >= 1");
    if (w_part < 0.0 || w_kp < 0.0)
      throw ValidationError("decoder score weights must be >= 0");
    if (!(w_part + w_kp > 0.0))
      throw ValidationError("decoder score weights must not both be zero");
    if (!(max_limb_len > 0.0))
      throw ValidationError("decoder max_limb_len must be > 0");
    if (top < 1) throw ValidationError("decoder top must be >= 1");
  }
};

struct KeypointCandidate {
  GridPoint cell;     // peak cell
  double score = 0.0; // heatmap value at the peak
};

struct PartCandidate {
  int a = -1;              // index into the candidate list of the edge's a type
  int b = -1;              // index into the candidate list of the edge's b type
  double part_score = 0.0; // mean part-channel response along the segment
  double score = 0.0;      // weighted score used for greedy ordering
};

// One grouped person at grid level: a candidate index per keypoint type
// (-1 for empty) plus the accepted links.
struct AssembledPose {
  std::vector<int> slot;
  std::vector<std::pair<int, double>> links;  // (edge index, link score)

  int filled_count() const {
    int n = 0;
    for (int s : slot) n += s >= 0 ? 1 : 0;
    return n;
  }
};

struct DecodeResult {
  std::vector<Pose> poses;  // image coordinates, best score first
  std::vector<AssembledPose> assembled;  // grid-level grouping, same order
  std::vector<std::vector<KeypointCandidate>> candidates;  // per keypoint type
};

// 3x3 non-maximum suppression. A cell is a peak when it beats every in-range
// neighbor; among equal adjacent values only the smallest row-major index
// survives, so plateaus yield exactly one peak per connected run.
template <class S>
std::vector<KeypointCandidate> nms_peaks(const Grid<S>& g,
                                         double min_peak_score) {
  const int h = int(g.rows());
  const int w = int(g.cols());
  std::vector<KeypointCandidate> out;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const S v = g(y, x);
      if (double(v) < min_peak_score) continue;
      bool peak = true;
      for (int dy = -1; dy <= 1 && peak; ++dy) {
        for (int dx = -1; dx <= 1 && peak; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int ny = y + dy;
          const int nx = x + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          const S nv = g(ny, nx);
          if (nv > v || (nv == v && (ny * w + nx) < (y * w + x))) peak = false;
        }
      }
      if (peak) out.push_back({{x, y}, double(v)});
    }
  }
  return out;
}

// Bilinear sample at grid coordinates, clamped to the border cells.
template <class S>
double bilinear(const Grid<S>& g, double x, double y) {
  const int h = int(g.rows());
  const int w = int(g.cols());
  x = std::clamp(x, 0.0, double(w - 1));
  y = std::clamp(y, 0.0, double(h - 1));
  const int x0 = w > 1 ? std::min(int(std::floor(x)), w - 2) : 0;
  const int y0 = h > 1 ? std::min(int(std::floor(y)), h - 2) : 0;
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = (1.0 - fx) * double(g(y0, x0)) + fx * double(g(y0, x1));
  const double bot = (1.0 - fx) * double(g(y1, x0)) + fx * double(g(y1, x1));
  return (1.0 - fy) * top + fy * bot;
}

// Mean response along the segment from a to b, sampled at n points including
// both endpoints. A single sample lands on the midpoint.
template <class S>
double score_part(const Grid<S>& g, double ax, double ay, double bx, double by,
                  int n) {
  if (n < 1) throw ValidationError("part sampling needs at least one sample");
  if (n == 1) return bilinear(g, 0.5 * (ax + bx), 0.5 * (ay + by));
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = double(i) / double(n - 1);
    sum += bilinear(g, ax + t * (bx - ax), ay + t * (by - ay));
  }
  return sum / double(n);
}

inline double weighted_part_score(double part, double score_a, double score_b,
                                  const DecoderConfig& cfg) {
  return cfg.w_part * part + cfg.w_kp * (0.5 * (score_a + score_b));
}

// All candidate links for one edge: every peak pair within max_limb_len.
// Generation order is (a index, b index) ascending, which later tie-breaks
// equal scores.
template <class S>
std::vector<PartCandidate> build_edge_candidates(
    const Grid<S>& part_channel, const std::vector<KeypointCandidate>& cands_a,
    const std::vector<KeypointCandidate>& cands_b, const DecoderConfig& cfg) {
  std::vector<PartCandidate> out;
  for (int ia = 0; ia < int(cands_a.size()); ++ia) {
    for (int ib = 0; ib < int(cands_b.size()); ++ib) {
      const GridPoint pa = cands_a[ia].cell;
      const GridPoint pb = cands_b[ib].cell;
      const double len = std::hypot(double(pb.x - pa.x), double(pb.y - pa.y));
      if (len > cfg.max_limb_len) continue;
      PartCandidate pc;
      pc.a = ia;
      pc.b = ib;
      pc.part_score = score_part(part_channel, double(pa.x), double(pa.y),
                                 double(pb.x), double(pb.y), cfg.n_samples);
      pc.score = weighted_part_score(pc.part_score, cands_a[ia].score,
                                     cands_b[ib].score, cfg);
      out.push_back(pc);
    }
  }
  return out;
}

// Edge processing order for assembly: tree edges in declaration order first,
// redundant edges after.
inline std::vector<int> assembly_edge_order(const SkeletonSpec& spec) {
  std::vector<int> order;
  for (int e = 0; e < spec.edge_count(); ++e)
    if (!spec.edges[e].redundant) order.push_back(e);
  for (int e = 0; e < spec.edge_count(); ++e)
    if (spec.edges[e].redundant) order.push_back(e);
  return order;
}

// Greedy grouping. Links are consumed per edge in descending score order;
// each one either starts a pose, extends one, merges two with disjoint
// keypoint slots, or closes a cycle inside one pose. A keypoint candidate
// never belongs to more than one pose, and a pose holds at most one
// candidate per keypoint type.
inline std::vector<AssembledPose> assemble(
    const SkeletonSpec& spec,
    const std::vector<std::vector<KeypointCandidate>>& kp_cands,
    const std::vector<std::vector<PartCandidate>>& part_cands) {
  const int k = spec.keypoint_count();
  if (int(kp_cands.size()) != k)
    throw ChannelMismatchError("candidate lists do not match keypoint types");
  if (int(part_cands.size()) != spec.edge_count())
    throw ChannelMismatchError("link lists do not match skeleton edges");

  std::vector<std::vector<int>> owner(kp_cands.size());
  for (size_t t = 0; t < kp_cands.size(); ++t)
    owner[t].assign(kp_cands[t].size(), -1);

  std::vector<AssembledPose> poses;
  std::vector<bool> dead;

  auto new_pose = [&]() {
    AssembledPose p;
    p.slot.assign(k, -1);
    poses.push_back(std::move(p));
    dead.push_back(false);
    return int(poses.size()) - 1;
  };

  for (int e : assembly_edge_order(spec)) {
    const int ta = spec.edges[e].a;
    const int tb = spec.edges[e].b;
    std::vector<PartCandidate> ranked = part_cands[e];
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const PartCandidate& l, const PartCandidate& r) {
                       return l.score > r.score;
                     });
    for (const PartCandidate& pc : ranked) {
      const int pa = owner[ta][pc.a];
      const int pb = owner[tb][pc.b];
      if (pa < 0 && pb < 0) {
        const int p = new_pose();
        poses[p].slot[ta] = pc.a;
        poses[p].slot[tb] = pc.b;
        owner[ta][pc.a] = p;
        owner[tb][pc.b] = p;
        poses[p].links.emplace_back(e, pc.score);
      } else if (pa >= 0 && pb < 0) {
        if (poses[pa].slot[tb] >= 0) continue;  // type already taken
        poses[pa].slot[tb] = pc.b;
        owner[tb][pc.b] = pa;
        poses[pa].links.emplace_back(e, pc.score);
      } else if (pa < 0 && pb >= 0) {
        if (poses[pb].slot[ta] >= 0) continue;
        poses[pb].slot[ta] = pc.a;
        owner[ta][pc.a] = pb;
        poses[pb].links.emplace_back(e, pc.score);
      } else if (pa == pb) {
        // Both endpoints already grouped together; the link closes a cycle
        // and only its score is added.
        poses[pa].links.emplace_back(e, pc.score);
      } else {
        // Distinct poses merge only when no keypoint type is claimed twice.
        bool disjoint = true;
        for (int t = 0; t < k && disjoint; ++t)
          if (poses[pa].slot[t] >= 0 && poses[pb].slot[t] >= 0)
            disjoint = false;
        if (!disjoint) continue;
        const int keep = std::min(pa, pb);
        const int drop = std::max(pa, pb);
        for (int t = 0; t < k; ++t) {
          if (poses[drop].slot[t] >= 0) {
            poses[keep].slot[t] = poses[drop].slot[t];
            owner[t][poses[drop].slot[t]] = keep;
          }
        }
        poses[keep].links.insert(poses[keep].links.end(),
                                 poses[drop].links.begin(),
                                 poses[drop].links.end());
        poses[drop].slot.assign(k, -1);
        poses[drop].links.clear();
        dead[drop] = true;
        poses[keep].links.emplace_back(e, pc.score);
      }
    }
  }

  std::vector<AssembledPose> alive;
  for (size_t i = 0; i < poses.size(); ++i)
    if (!dead[i]) alive.push_back(std::move(poses[i]));
  return alive;
}

// Mean of all accepted link scores and all grouped peak scores.
inline double pose_score(
    const AssembledPose& p,
    const std::vector<std::vector<KeypointCandidate>>& kp_cands) {
  double sum = 0.0;
  int n = 0;
  for (const auto& [edge, score] : p.links) {
    (void)edge;
    sum += score;
    ++n;
  }
  for (size_t t = 0; t < p.slot.size(); ++t) {
    if (p.slot[t] < 0) continue;
    sum += kp_cands[t][p.slot[t]].score;
    ++n;
  }
  return n > 0 ? sum / double(n) : 0.0;
}

// Quarter-cell refinement: shift each axis toward the larger of the two
// neighbors; out-of-range neighbors count as zero, equal neighbors leave the
// axis alone.
template <class S>
std::pair<double, double> refine_cell(const Grid<S>& g, int x, int y) {
  const int h = int(g.rows());
  const int w = int(g.cols());
  auto at = [&](int yy, int xx) -> double {
    if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
    return double(g(yy, xx));
  };
  const double dx = at(y, x + 1) - at(y, x - 1);
  const double dy = at(y + 1, x) - at(y - 1, x);
  double rx = double(x);
  double ry = double(y);
  if (dx > 0.0) rx += 0.25;
  if (dx < 0.0) rx -= 0.25;
  if (dy > 0.0) ry += 0.25;
  if (dy < 0.0) ry -= 0.25;
  return {rx, ry};
}

// Structural checks on an assembly: every slot index valid, no candidate in
// two poses, links only between filled matching slots, at most one link per
// edge per pose, no single-keypoint poses. Returns human-readable violations,
// empty when clean.
inline std::vector<std::string> check_assembly_invariants(
    const SkeletonSpec& spec,
    const std::vector<std::vector<KeypointCandidate>>& kp_cands,
    const std::vector<AssembledPose>& poses) {
  std::vector<std::string> bad;
  const int k = spec.keypoint_count();
  std::vector<std::vector<int>> used(kp_cands.size());
  for (size_t t = 0; t < kp_cands.size(); ++t)
    used[t].assign(kp_cands[t].size(), 0);
  for (size_t pi = 0; pi < poses.size(); ++pi) {
    const AssembledPose& p = poses[pi];
    const std::string tag = "pose " + std::to_string(pi) + ": ";
    if (int(p.slot.size()) != k) {
      bad.push_back(tag + "slot count mismatch");
      continue;
    }
    for (int t = 0; t < k; ++t) {
      const int c = p.slot[t];
      if (c < 0) continue;
      if (c >= int(kp_cands[t].size())) {
        bad.push_back(tag + "slot " + std::to_string(t) +
                      " references missing candidate");
        continue;
      }
      if (++used[t][c] > 1)
        bad.push_back(tag + "candidate (" + std::to_string(t) + ", " +
                      std::to_string(c) + ") grouped more than once");
    }
    std::vector<int> link_count(spec.edge_count(), 0);
    for (const auto& [e, score] : p.links) {
      (void)score;
      if (e < 0 || e >= spec.edge_count()) {
        bad.push_back(tag + "link references missing edge");
        continue;
      }
      if (p.slot[spec.edges[e].a] < 0 || p.slot[spec.edges[e].b] < 0)
        bad.push_back(tag + "link on edge " + std::to_string(e) +
                      " has an empty endpoint slot");
      if (++link_count[e] > 1)
        bad.push_back(tag + "edge " + std::to_string(e) + " linked twice");
    }
    if (p.links.empty()) bad.push_back(tag + "pose has no links");
    if (p.filled_count() < 2) bad.push_back(tag + "pose has fewer than two keypoints");
  }
  return bad;
}

// Full decode: peaks, links, grouping, scoring, refinement, and mapping back
// to image coordinates. Poses come out best first, at most cfg.top of them.
template <class S>
DecodeResult decode(const HeatmapStackT<S>& stack, const SkeletonSpec& spec,
                    const DecoderConfig& cfg) {
  cfg.validate();
  validate_skeleton(spec);
  const int k = spec.keypoint_count();
  if (stack.channel_count() != spec.channel_count())
    throw ChannelMismatchError(
        "stack has " + std::to_string(stack.channel_count()) +
        " channels, skeleton needs " + std::to_string(spec.channel_count()));

  DecodeResult res;
  res.candidates.resize(k);
  for (int t = 0; t < k; ++t)
    res.candidates[t] = nms_peaks(stack.channels[t], cfg.min_peak_score);

  std::vector<std::vector<PartCandidate>> part_cands(spec.edge_count());
  for (int e = 0; e < spec.edge_count(); ++e)
    part_cands[e] = build_edge_candidates(
        stack.channels[k + e], res.candidates[spec.edges[e].a],
        res.candidates[spec.edges[e].b], cfg);

  std::vector<AssembledPose> assembled =
      assemble(spec, res.candidates, part_cands);

  std::vector<int> order(assembled.size());
  std::vector<double> scores(assembled.size());
  std::vector<int> location(assembled.size(), 0);
  for (size_t i = 0; i < assembled.size(); ++i) {
    order[i] = int(i);
    scores[i] = pose_score(assembled[i], res.candidates);
    for (size_t t = 0; t < assembled[i].slot.size(); ++t) {
      if (assembled[i].slot[t] < 0) continue;
      const GridPoint c = res.candidates[t][assembled[i].slot[t]].cell;
      location[i] = c.y * stack.width() + c.x;
      break;
    }
  }
  // ties in score break toward the pose whose first keypoint sits earlier in
  // row-major order, so symmetric scenes decode in a fixed order
  std::stable_sort(order.begin(), order.end(), [&](int l, int r) {
    if (scores[l] != scores[r]) return scores[l] > scores[r];
    return location[l] < location[r];
  });
  if (int(order.size()) > cfg.top) order.resize(cfg.top);

  for (int i : order) {
    const AssembledPose& a = assembled[i];
    Pose pose;
    pose.keypoints.assign(k, {0.0, 0.0, Visibility::absent});
    for (int t = 0; t < k; ++t) {
      if (a.slot[t] < 0) continue;
      const GridPoint cell = res.candidates[t][a.slot[t]].cell;
      double gx = double(cell.x);
      double gy = double(cell.y);
      if (cfg.refine)
        std::tie(gx, gy) = refine_cell(stack.channels[t], cell.x, cell.y);
      const auto [ix, iy] = map_to_image(gx, gy, stack.stride);
      pose.keypoints[t] = {ix, iy, Visibility::visible};
    }
    pose.score = scores[i];
    res.poses.push_back(std::move(pose));
    res.assembled.push_back(a);
  }
  return res;
}

}  // namespace partpose
