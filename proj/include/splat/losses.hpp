#pragma once

#include <Eigen/Core>

#include "splat/grad.hpp"
#include "splat/image.hpp"
#include "splat/types.hpp"

namespace splat {

struct LossWeights {
  double render = 1.0;
  double smoke_alpha = 0.1;
  double smoke_color = 0.05;
  double mono = 0.1;
  double depth = 2.0;
  double mask = 0.5;
  double dssim = 0.2;  // share of the structural term inside the render loss
};

/// Per-term loss values for one iteration; unevaluated terms stay 0.
struct LossTerms {
  double render = 0.0;
  double smoke_alpha = 0.0;
  double smoke_color = 0.0;
  double mono = 0.0;
  double depth = 0.0;
  double mask = 0.0;
};

/// Weighted sum of the six terms. Throws TrainingDivergence naming the
/// first non-finite term.
double total_loss(const LossTerms& terms, const LossWeights& weights);

/// Degree-0 color of a primitive's RGB spherical harmonics (the view
/// independent part, offset included, unclamped so gradients stay alive).
Eigen::Vector3d dc_color(const GaussianPrimitive& g);

/// (1 - dssim) * mean L1 + dssim * (1 - SSIM) / 2, gradient w.r.t. pred.
double render_loss(const Image& pred, const Image& gt, double dssim_weight, Image& grad_pred);

/// Population variance of sigmoid opacity over all smoke primitives for one
/// modality. Gradients land on opacity_logit (and opacity_gap_raw in the
/// thermal case). Empty set gives 0.
double smoke_alpha_loss(const GaussianSet& smoke, Modality modality, SetGrad& grads);

/// Population variance of the degree-0 RGB color across primitives,
/// averaged over channels. Gradients land on the first sh_rgb row.
double smoke_color_loss(const GaussianSet& smoke, SetGrad& grads);

/// Mean over primitives of the channel variance of the degree-0 color;
/// zero exactly when every primitive is gray.
double mono_loss(const GaussianSet& smoke, SetGrad& grads);

/// Mean absolute depth difference over valid pixels (valid_mask > 0).
/// No valid pixels gives 0 with a zero gradient.
double depth_loss(const Image& rendered_depth, const Image& target_depth, const Image& valid_mask,
                  Image& grad_depth);

/// Mean L1 between a smoke-only accumulation map and the ground-truth mask.
double mask_loss(const Image& pred_accum, const Image& gt_mask, Image& grad_accum);

}  // namespace splat
