#pragma once

#include <Eigen/Core>
#include <vector>

#include "splat/deform.hpp"
#include "splat/types.hpp"

namespace splat {

/// Gradient slot for one primitive, shapes matching GaussianPrimitive.
struct PrimitiveGrad {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector4d rotation = Eigen::Vector4d::Zero();
  Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
  double opacity_logit = 0.0;
  double opacity_gap_raw = 0.0;
  Eigen::MatrixXd sh_rgb;
  Eigen::VectorXd sh_thermal;
  TemporalGrad temporal;

  void add(const PrimitiveGrad& other);
  void add_scaled(const PrimitiveGrad& other, double s);
};

PrimitiveGrad zero_grad_like(const GaussianPrimitive& g);

struct SetGrad {
  std::vector<PrimitiveGrad> primitives;
  /// Norm of the accumulated screen-space mean gradient per primitive
  /// (pixel units), filled by render_backward. Densification statistics
  /// read this; the optimizer ignores it.
  std::vector<double> screen_grad_norm;

  void add(const SetGrad& other);
  void add_scaled(const SetGrad& other, double s);
};

SetGrad zero_grad_like(const GaussianSet& set);

/// Full gradient of a render (or loss) w.r.t. every trainable quantity.
struct SceneGrad {
  SetGrad surface;
  SetGrad smoke;
  DeformGradients deform;

  void add(const SceneGrad& other);
};

}  // namespace splat
