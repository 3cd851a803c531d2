#pragma once

#include <string>
#include <vector>

#include "partpose/errors.hpp"
#include "partpose/heatmap.hpp"

namespace partpose {

struct LossConfig {
  double alpha = 0.1;  // foreground compensation offset
  double beta = 0.02;  // background compensation offset
  double thre = 0.01;  // foreground / background branch threshold on gt
  double eta = 2.0;    // extra weight on keypoint channels
  // lambda[i] weights the loss at pyramid level i (stride R * 2^i); the
  // coarse few-pixel maps get the large weights.
  std::vector<double> lambda = {1.0, 2.0, 4.0, 16.0, 64.0};
  int stages = 1;  // T, number of stacked prediction stages

  void validate() const {
    if (!(alpha > beta && beta > 0.0))
      throw ValidationError("loss requires alpha > beta > 0");
    if (eta < 0.0) throw ValidationError("loss eta must be >= 0");
    if (!(thre > 0.0 && thre < 1.0))
      throw ValidationError("loss thre must lie in (0, 1)");
    if (lambda.empty()) throw ValidationError("loss lambda weights missing");
    for (double l : lambda)
      if (!(l > 0.0)) throw ValidationError("loss lambda weights must be > 0");
    if (stages < 1) throw ValidationError("loss stage count must be >= 1");
  }
};

// Sd: the branch is chosen by the ground-truth value, strictly above thre
// for foreground.
inline double modulation(double pred, double gt, const LossConfig& cfg) {
  return gt > cfg.thre ? pred - cfg.alpha : 1.0 - pred - cfg.beta;
}

inline double channel_weight(int channel, int keypoint_channels, double eta) {
  return channel < keypoint_channels ? eta + 1.0 : 1.0;
}

// Per-pixel loss term. Evaluation order is pinned as
// (weight * diff^2) * (1 - Sd)^2 so the modulation factor divides out of the
// plain-L2 term exactly, which the scaling tests rely on.
inline double focal_l2_pixel(double pred, double gt, double weight,
                             const LossConfig& cfg) {
  const double sd = modulation(pred, gt, cfg);
  const double diff = pred - gt;
  const double m = 1.0 - sd;
  return (weight * (diff * diff)) * (m * m);
}

// d(term)/d(pred), treating the ground truth (and so the branch) as constant.
inline double focal_l2_grad_pixel(double pred, double gt, double weight,
                                  const LossConfig& cfg) {
  const double diff = pred - gt;
  if (gt > cfg.thre) {
    const double m = 1.0 - pred + cfg.alpha;  // 1 - Sd, d(m)/d(pred) = -1
    return weight * (2.0 * diff * m * m - 2.0 * diff * diff * m);
  }
  const double m = pred + cfg.beta;  // 1 - Sd, d(m)/d(pred) = +1
  return weight * (2.0 * diff * m * m + 2.0 * diff * diff * m);
}

namespace detail {

template <class S>
void check_loss_shapes(const HeatmapStackT<S>& pred, const HeatmapStackT<S>& gt,
                       const MaskMap& mask, int keypoint_channels) {
  if (!pred.same_shape(gt))
    throw DimMismatchError("prediction and ground truth shapes differ");
  if (int(mask.rows()) != pred.height() || int(mask.cols()) != pred.width())
    throw DimMismatchError("mask shape does not match the heatmaps");
  if (keypoint_channels < 0 || keypoint_channels > pred.channel_count())
    throw DimMismatchError("keypoint channel count " +
                           std::to_string(keypoint_channels) +
                           " exceeds stack channels");
}

}  // namespace detail

// Focal L2 loss over one stack: a pure sum over channels and unmasked pixels,
// with no pixel-count averaging. Summation runs in channel then row-major
// order so repeated evaluations agree bit for bit.
template <class S>
double focal_l2(const HeatmapStackT<S>& pred, const HeatmapStackT<S>& gt,
                const MaskMap& mask, const LossConfig& cfg,
                int keypoint_channels) {
  cfg.validate();
  detail::check_loss_shapes(pred, gt, mask, keypoint_channels);
  double total = 0.0;
  for (int j = 0; j < pred.channel_count(); ++j) {
    const double w = channel_weight(j, keypoint_channels, cfg.eta);
    const Grid<S>& pc = pred.channels[j];
    const Grid<S>& gc = gt.channels[j];
    double channel_sum = 0.0;
    for (int y = 0; y < pred.height(); ++y) {
      for (int x = 0; x < pred.width(); ++x) {
        if (mask(y, x) == 0) continue;
        channel_sum +=
            focal_l2_pixel(double(pc(y, x)), double(gc(y, x)), w, cfg);
      }
    }
    total += channel_sum;
  }
  return total;
}

// Analytic gradient of focal_l2 with respect to every predicted value.
// Masked pixels get exactly 0.
template <class S>
HeatmapStackT<S> focal_l2_grad(const HeatmapStackT<S>& pred,
                               const HeatmapStackT<S>& gt, const MaskMap& mask,
                               const LossConfig& cfg, int keypoint_channels) {
  cfg.validate();
  detail::check_loss_shapes(pred, gt, mask, keypoint_channels);
  HeatmapStackT<S> grad = HeatmapStackT<S>::zeros(
      pred.channel_count(), pred.height(), pred.width(), pred.stride);
  for (int j = 0; j < pred.channel_count(); ++j) {
    const double w = channel_weight(j, keypoint_channels, cfg.eta);
    for (int y = 0; y < pred.height(); ++y) {
      for (int x = 0; x < pred.width(); ++x) {
        if (mask(y, x) == 0) continue;
        grad.channels[j](y, x) = S(focal_l2_grad_pixel(
            double(pred.channels[j](y, x)), double(gt.channels[j](y, x)), w,
            cfg));
      }
    }
  }
  return grad;
}

// Lambda-weighted mean of per-scale losses: sum_i lambda_i fl_i / sum_i
// lambda_i. Equal inputs map to themselves.
inline double weighted_scale_sum(const std::vector<double>& fl,
                                 const std::vector<double>& lambda) {
  if (fl.size() != lambda.size())
    throw DimMismatchError("per-scale loss count does not match lambda");
  double num = 0.0;
  double den = 0.0;
  for (size_t i = 0; i < fl.size(); ++i) {
    num += lambda[i] * fl[i];
    den += lambda[i];
  }
  return num / den;
}

// Total loss over stages and scales; each stage contributes its weighted
// scale mean, and stages add.
template <class S>
double total_loss(const std::vector<std::vector<HeatmapStackT<S>>>& preds,
                  const std::vector<HeatmapStackT<S>>& gts,
                  const std::vector<MaskMap>& masks, const LossConfig& cfg,
                  int keypoint_channels) {
  cfg.validate();
  if (gts.size() != cfg.lambda.size() || masks.size() != gts.size())
    throw DimMismatchError("pyramid depth does not match lambda weights");
  double total = 0.0;
  for (const auto& stage : preds) {
    if (stage.size() != gts.size())
      throw DimMismatchError("stage scale count does not match ground truth");
    std::vector<double> fl(stage.size());
    for (size_t i = 0; i < stage.size(); ++i)
      fl[i] = focal_l2(stage[i], gts[i], masks[i], cfg, keypoint_channels);
    total += weighted_scale_sum(fl, cfg.lambda);
  }
  return total;
}

}  // namespace partpose
