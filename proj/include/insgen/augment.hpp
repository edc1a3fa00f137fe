#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "insgen/rng.hpp"
#include "insgen/tensor.hpp"

namespace insgen {

enum class AugmentOpKind { SignFlip, Rotation, Noise, Scaling, Translation };

struct AugmentOp {
  AugmentOpKind kind;
  // Rotation: max angle in degrees. Noise: sigma. Scaling: log-scale range.
  // Translation: offset range. Unused for SignFlip.
  double param = 0.0;
};

struct AugmentConfig {
  std::vector<AugmentOp> ops;
  double p = 0.0;  // per-op, per-sample application probability
};

// The standard 5-op pipeline for low-dimensional data.
AugmentConfig default_augment_pipeline(double p, double rot_max_deg = 30.0, double noise_sigma = 0.05,
                                       double scale_log = 0.2, double trans_range = 0.25);

// Applies each configured op independently per sample with probability cfg.p.
// Every op is affine in the input, so the whole pipeline reduces to one
// per-row affine map and the output is differentiable w.r.t. the batch.
// Draws depend only on (rng, row position), never on tensor contents.
Tensor apply(Graph& g, const Tensor& batch, const AugmentConfig& cfg, const RngStream& rng);

// As above with explicit per-row substream keys; apply() uses keys 0..B-1.
Tensor apply_with_keys(Graph& g, const Tensor& batch, const AugmentConfig& cfg, const RngStream& rng,
                       std::span<const std::uint64_t> row_keys);

// Adaptive augmentation strength. The window tracks the mean sign of recent
// real logits; p is nudged toward the point where that statistic sits at the
// target.
struct AdaState {
  double p = 0.0;
  double target = 0.6;
  double step_size = 0.01;
  double p_max = 0.8;
  std::size_t window_capacity = 4;
  std::deque<double> window;  // per-batch mean sign of real logits

  double window_mean() const;
};

// Pushes mean(sign(logits)) into the window, then moves p one step toward
// the target: up when the window mean exceeds it, down when below, untouched
// on an exact hit. p is clamped to [0, p_max].
void ada_update(AdaState& state, const Tensor& real_logits);

}  // namespace insgen
