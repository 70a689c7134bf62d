#include "splat/grad.hpp"

#include <cmath>

namespace splat {

void PrimitiveGrad::add(const PrimitiveGrad& other) {
  position += other.position;
  rotation += other.rotation;
  log_scale += other.log_scale;
  opacity_logit += other.opacity_logit;
  opacity_gap_raw += other.opacity_gap_raw;
  sh_rgb += other.sh_rgb;
  sh_thermal += other.sh_thermal;
  temporal.t_appear += other.temporal.t_appear;
  temporal.width_appear_raw += other.temporal.width_appear_raw;
  temporal.span_raw += other.temporal.span_raw;
  temporal.width_disappear_raw += other.temporal.width_disappear_raw;
}

PrimitiveGrad zero_grad_like(const GaussianPrimitive& g) {
  PrimitiveGrad z;
  z.sh_rgb = Eigen::MatrixXd::Zero(g.sh_rgb.rows(), g.sh_rgb.cols());
  z.sh_thermal = Eigen::VectorXd::Zero(g.sh_thermal.size());
  return z;
}

void PrimitiveGrad::add_scaled(const PrimitiveGrad& other, double s) {
  position += s * other.position;
  rotation += s * other.rotation;
  log_scale += s * other.log_scale;
  opacity_logit += s * other.opacity_logit;
  opacity_gap_raw += s * other.opacity_gap_raw;
  sh_rgb += s * other.sh_rgb;
  sh_thermal += s * other.sh_thermal;
  temporal.t_appear += s * other.temporal.t_appear;
  temporal.width_appear_raw += s * other.temporal.width_appear_raw;
  temporal.span_raw += s * other.temporal.span_raw;
  temporal.width_disappear_raw += s * other.temporal.width_disappear_raw;
}

void SetGrad::add(const SetGrad& other) {
  for (std::size_t i = 0; i < primitives.size(); ++i) primitives[i].add(other.primitives[i]);
  for (std::size_t i = 0; i < screen_grad_norm.size() && i < other.screen_grad_norm.size(); ++i)
    screen_grad_norm[i] += other.screen_grad_norm[i];
}

void SetGrad::add_scaled(const SetGrad& other, double s) {
  for (std::size_t i = 0; i < primitives.size(); ++i)
    primitives[i].add_scaled(other.primitives[i], s);
  for (std::size_t i = 0; i < screen_grad_norm.size() && i < other.screen_grad_norm.size(); ++i)
    screen_grad_norm[i] += std::abs(s) * other.screen_grad_norm[i];
}

SetGrad zero_grad_like(const GaussianSet& set) {
  SetGrad z;
  z.primitives.reserve(set.size());
  for (const auto& g : set.primitives) z.primitives.push_back(zero_grad_like(g));
  z.screen_grad_norm.assign(set.size(), 0.0);
  return z;
}

void SceneGrad::add(const SceneGrad& other) {
  surface.add(other.surface);
  smoke.add(other.smoke);
  deform.add(other.deform);
}

}  // namespace splat
