#include "splat/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "splat/errors.hpp"
#include "splat/metrics.hpp"
#include "splat/sh.hpp"

namespace splat {

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

double total_loss(const LossTerms& terms, const LossWeights& weights) {
  const struct {
    const char* name;
    double value;
    double weight;
  } entries[] = {
      {"render", terms.render, weights.render},
      {"smoke_alpha", terms.smoke_alpha, weights.smoke_alpha},
      {"smoke_color", terms.smoke_color, weights.smoke_color},
      {"mono", terms.mono, weights.mono},
      {"depth", terms.depth, weights.depth},
      {"mask", terms.mask, weights.mask},
  };
  double total = 0.0;
  for (const auto& e : entries) {
    if (!std::isfinite(e.value))
      throw TrainingDivergence(std::string("non-finite ") + e.name + " loss");
    total += e.weight * e.value;
  }
  return total;
}

Eigen::Vector3d dc_color(const GaussianPrimitive& g) {
  return (kShC0 * g.sh_rgb.row(0).transpose()).array() + 0.5;
}

double render_loss(const Image& pred, const Image& gt, double dssim_weight, Image& grad_pred) {
  if (!pred.same_shape(gt)) throw std::invalid_argument("render loss inputs must share dims");

  const double inv_n = 1.0 / static_cast<double>(pred.size());
  double l1 = 0.0;
  grad_pred = Image(pred.width(), pred.height(), pred.channels());
  const double* pp = pred.data();
  const double* pg = gt.data();
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pp[i] - pg[i];
    l1 += std::abs(d);
    grad_pred.data()[i] = (1.0 - dssim_weight) * sign(d) * inv_n;
  }
  l1 *= inv_n;

  if (dssim_weight == 0.0) return (1.0 - dssim_weight) * l1;

  Image ssim_grad;
  const double s = ssim_with_grad(pred, gt, ssim_grad);
  for (std::size_t i = 0; i < pred.size(); ++i)
    grad_pred.data()[i] -= dssim_weight * 0.5 * ssim_grad.data()[i];
  return (1.0 - dssim_weight) * l1 + dssim_weight * (1.0 - s) * 0.5;
}

double smoke_alpha_loss(const GaussianSet& smoke, Modality modality, SetGrad& grads) {
  const std::size_t n = smoke.size();
  if (n == 0) return 0.0;

  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = smoke.primitives[i].opacity(modality, smoke.kind);
  // Center relative to the first element so a homogeneous set is exactly
  // zero regardless of rounding in the mean.
  double shifted_mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) shifted_mean += s[i] - s[0];
  shifted_mean /= static_cast<double>(n);

  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (s[i] - s[0]) - shifted_mean;
    var += d * d;
    const double g_s = 2.0 * d / static_cast<double>(n);
    const double g_logit = g_s * s[i] * (1.0 - s[i]);
    grads.primitives[i].opacity_logit += g_logit;
    if (modality == Modality::Thermal && smoke.kind == SetKind::Smoke)
      grads.primitives[i].opacity_gap_raw -=
          g_logit * sigmoid(smoke.primitives[i].opacity_gap_raw);
  }
  return var / static_cast<double>(n);
}

double smoke_color_loss(const GaussianSet& smoke, SetGrad& grads) {
  const std::size_t n = smoke.size();
  if (n == 0) return 0.0;

  std::vector<Eigen::Vector3d> colors(n);
  for (std::size_t i = 0; i < n; ++i) colors[i] = dc_color(smoke.primitives[i]);
  // Same first-element centering as the opacity variance: exact zero on
  // homogeneous colors.
  Eigen::Vector3d shifted_mean = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < n; ++i) shifted_mean += colors[i] - colors[0];
  shifted_mean /= static_cast<double>(n);

  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d d = (colors[i] - colors[0]) - shifted_mean;
    var += d.squaredNorm();
    // d(channel variance mean)/d(color) chained through the DC transform.
    grads.primitives[i].sh_rgb.row(0) +=
        (2.0 / (3.0 * static_cast<double>(n)) * kShC0) * d.transpose();
  }
  return var / (3.0 * static_cast<double>(n));
}

double mono_loss(const GaussianSet& smoke, SetGrad& grads) {
  const std::size_t n = smoke.size();
  if (n == 0) return 0.0;

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d c = dc_color(smoke.primitives[i]);
    // Shift by the first channel so gray (equal-channel) colors are exactly
    // zero-variance.
    const Eigen::Vector3d s = c.array() - c[0];
    const Eigen::Vector3d d = s.array() - s.mean();
    total += d.squaredNorm() / 3.0;
    grads.primitives[i].sh_rgb.row(0) +=
        (2.0 / (3.0 * static_cast<double>(n)) * kShC0) * d.transpose();
  }
  return total / static_cast<double>(n);
}

double depth_loss(const Image& rendered_depth, const Image& target_depth, const Image& valid_mask,
                  Image& grad_depth) {
  if (!rendered_depth.same_shape(target_depth) || !rendered_depth.same_shape(valid_mask))
    throw std::invalid_argument("depth loss inputs must share dims");

  grad_depth = Image(rendered_depth.width(), rendered_depth.height(), 1);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < rendered_depth.size(); ++i)
    if (valid_mask.data()[i] > 0.0) ++count;
  if (count == 0) return 0.0;

  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t i = 0; i < rendered_depth.size(); ++i) {
    if (valid_mask.data()[i] <= 0.0) continue;
    const double d = rendered_depth.data()[i] - target_depth.data()[i];
    sum += std::abs(d);
    grad_depth.data()[i] = sign(d) * inv;
  }
  return sum * inv;
}

double mask_loss(const Image& pred_accum, const Image& gt_mask, Image& grad_accum) {
  if (!pred_accum.same_shape(gt_mask)) throw std::invalid_argument("mask loss inputs must share dims");

  grad_accum = Image(pred_accum.width(), pred_accum.height(), 1);
  const double inv_n = 1.0 / static_cast<double>(pred_accum.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred_accum.size(); ++i) {
    const double d = pred_accum.data()[i] - gt_mask.data()[i];
    sum += std::abs(d);
    grad_accum.data()[i] = sign(d) * inv_n;
  }
  return sum * inv_n;
}

}  // namespace splat
