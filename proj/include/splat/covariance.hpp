#pragma once

#include <Eigen/Core>

namespace splat {

/// Rotation matrix from a (not necessarily normalized) quaternion (w,x,y,z).
/// The quaternion is normalized internally.
Eigen::Matrix3d quat_to_rotation(const Eigen::Vector4d& q);

/// d(R)/d(q) contracted with grad_R, including the normalization Jacobian,
/// so the result is the gradient w.r.t. the raw (unnormalized) quaternion.
Eigen::Vector4d quat_to_rotation_backward(const Eigen::Vector4d& q, const Eigen::Matrix3d& grad_r);

/// 3D covariance R diag(exp(2*log_scale)) R^T from rotation + log scales.
Eigen::Matrix3d covariance3d(const Eigen::Vector4d& quat, const Eigen::Vector3d& log_scale);

/// Backward of covariance3d: grad_sigma (symmetric 3x3) ->
/// gradients w.r.t. the raw quaternion and the log scales.
void covariance3d_backward(const Eigen::Vector4d& quat, const Eigen::Vector3d& log_scale,
                           const Eigen::Matrix3d& grad_sigma, Eigen::Vector4d& grad_quat,
                           Eigen::Vector3d& grad_log_scale);

}  // namespace splat
