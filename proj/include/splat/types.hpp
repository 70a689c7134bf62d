#pragma once

#include <Eigen/Core>
#include <cmath>
#include <optional>
#include <vector>

#include "splat/image.hpp"

namespace splat {

enum class Modality { RGB, Thermal };
enum class SetKind { Surface, Smoke };

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }
inline double softplus(double x) {
  // log(1+e^x) without overflow for large x.
  return x > 30.0 ? x : std::log1p(std::exp(x));
}
inline double softplus_inv(double y) { return std::log(std::expm1(y)); }

/// Appearance/disappearance profile of a smoke primitive. Stored unconstrained:
/// width = 1e-3 + softplus(raw), t_disappear = t_appear + softplus(span_raw).
struct TemporalOpacity {
  double t_appear = 0.0;
  double width_appear_raw = 0.0;
  double span_raw = 0.0;
  double width_disappear_raw = 0.0;

  double width_appear() const { return 1e-3 + softplus(width_appear_raw); }
  double width_disappear() const { return 1e-3 + softplus(width_disappear_raw); }
  double t_disappear() const { return t_appear + softplus(span_raw); }
};

/// One anisotropic 3D Gaussian. Opacity is kept as a logit and scale as a
/// log so optimization stays unconstrained. For surface primitives the single
/// logit is shared across modalities; smoke primitives derive the thermal
/// logit as opacity_logit - softplus(opacity_gap_raw), which keeps
/// sigmoid(rgb) >= sigmoid(thermal) for every gap value.
struct GaussianPrimitive {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector4d rotation = Eigen::Vector4d(1, 0, 0, 0);  // unit quaternion (w,x,y,z)
  Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
  double opacity_logit = 0.0;     // RGB logit (smoke) or shared logit (surface)
  double opacity_gap_raw = 0.0;   // smoke only
  Eigen::MatrixXd sh_rgb;         // D x 3, D = (degree+1)^2
  Eigen::VectorXd sh_thermal;     // D_t
  std::optional<TemporalOpacity> temporal;  // present iff the primitive is smoke

  double opacity_logit_for(Modality m, SetKind kind) const {
    if (kind == SetKind::Surface || m == Modality::RGB) return opacity_logit;
    return opacity_logit - softplus(opacity_gap_raw);
  }
  double opacity(Modality m, SetKind kind) const { return sigmoid(opacity_logit_for(m, kind)); }
};

/// A tagged collection of primitives with the set-level metadata the
/// renderer and optimizer need (spherical-harmonic degrees, scene extent
/// for learning-rate scaling and initialization bounds).
struct GaussianSet {
  SetKind kind = SetKind::Surface;
  std::vector<GaussianPrimitive> primitives;
  double scene_extent = 1.0;
  int sh_degree_rgb = 3;
  int sh_degree_thermal = 0;

  std::size_t size() const { return primitives.size(); }
  bool empty() const { return primitives.empty(); }
};

/// Pinhole camera, world-to-camera convention: x_cam = rotation * x_world + translation.
struct Camera {
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
  int width = 0, height = 0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Modality modality = Modality::RGB;

  Eigen::Vector3d center() const { return -rotation.transpose() * translation; }
  int image_channels() const { return modality == Modality::RGB ? 3 : 1; }
};

/// One observation: an image with its camera, normalized timestamp and
/// optional supervision maps. The clear render, when present, is the
/// smoke-free ground truth used for evaluation only.
struct FrameBundle {
  Camera camera;
  Image image;             // H x W x C in [0,1]
  double time = 0.0;       // in [0,1]
  std::optional<Image> mask;   // H x W in [0,1]
  std::optional<Image> depth;  // H x W, scene units
  std::optional<Image> clear;  // H x W x C in [0,1]
  std::string name;
};

/// Forward-render result. accumulation + final_transmittance = 1 per pixel.
struct RenderOutput {
  Image color;                // H x W x C
  Image accumulation;         // H x W
  Image depth;                // H x W (expected depth)
  Image final_transmittance;  // H x W
};

}  // namespace splat
