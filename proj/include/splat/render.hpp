#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "splat/deform.hpp"
#include "splat/grad.hpp"
#include "splat/types.hpp"

namespace splat {

enum class RenderMode { Combined, SurfaceOnly, SmokeOnly };

/// Surface and smoke sets plus the deformation field that animates the
/// smoke. The unit of rendering, training and checkpointing.
struct Scene {
  GaussianSet surface;
  GaussianSet smoke;
  DeformField deform;

  Scene() {
    surface.kind = SetKind::Surface;
    smoke.kind = SetKind::Smoke;
  }
};

/// Screen-space footprint of one projected primitive.
struct Splat2D {
  Eigen::Vector2d mean2d = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov2d = Eigen::Matrix2d::Identity();
  double depth = 0.0;  // camera-frame z
  int source_index = -1;
  SetKind source_set = SetKind::Surface;
};

/// Project one primitive through the camera. Smoke primitives are deformed
/// first when a field is supplied. Returns nothing when the primitive sits
/// behind the near plane (z <= 0.01 * scene_extent). The 2D covariance is
/// the affine EWA approximation J W Sigma W^T J^T plus a 0.3 px^2 dilation.
std::optional<Splat2D> project_gaussian(const GaussianPrimitive& g, const Camera& cam,
                                        double time, const DeformField* deform,
                                        double scene_extent, SetKind kind, int source_index);

/// Alpha-composite the selected set(s) front to back. Per pixel:
/// alpha'_i = alpha_i(modality, time) * exp(-1/2 d^T cov2d^-1 d), clamped to
/// 0.99 and skipped below 1/255; color = sum c_i alpha'_i T_i with
/// T_i = prod_{j<i} (1 - alpha'_j); accumulation = sum alpha'_i T_i;
/// depth = sum z_i alpha'_i T_i / (accumulation + 1e-8);
/// final_transmittance = prod (1 - alpha'_i).
RenderOutput render(const Scene& scene, const Camera& cam, double time, RenderMode mode);

/// Upstream gradients for render_backward; null members contribute nothing.
struct RenderGrads {
  const Image* color = nullptr;
  const Image* accumulation = nullptr;
  const Image* depth = nullptr;
};

/// Exact reverse-mode gradients of render() for every primitive parameter
/// and the deformation weights. `forward` must be the output of render()
/// for the same arguments. Culled and skipped splats receive zero gradient.
SceneGrad render_backward(const Scene& scene, const Camera& cam, double time, RenderMode mode,
                          const RenderOutput& forward, const RenderGrads& grads);

}  // namespace splat
