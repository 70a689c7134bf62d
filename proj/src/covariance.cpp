#include "splat/covariance.hpp"

#include <stdexcept>

namespace splat {

namespace {

Eigen::Matrix3d rotation_from_unit(const Eigen::Vector4d& n) {
  const double w = n[0], x = n[1], y = n[2], z = n[3];
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Eigen::Vector4d normalized_or_throw(const Eigen::Vector4d& q) {
  const double norm = q.norm();
  if (norm == 0.0) throw std::invalid_argument("zero quaternion has no rotation");
  return q / norm;
}

}  // namespace

Eigen::Matrix3d quat_to_rotation(const Eigen::Vector4d& q) {
  return rotation_from_unit(normalized_or_throw(q));
}

Eigen::Vector4d quat_to_rotation_backward(const Eigen::Vector4d& q,
                                          const Eigen::Matrix3d& grad_r) {
  const double norm = q.norm();
  if (norm == 0.0) throw std::invalid_argument("zero quaternion has no rotation");
  const Eigen::Vector4d n = q / norm;
  const double w = n[0], x = n[1], y = n[2], z = n[3];

  Eigen::Matrix3d dw, dx, dy, dz;
  dw << 0, -z, y, z, 0, -x, -y, x, 0;
  dx << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
  dy << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
  dz << -2 * z, -w, x, w, -2 * z, y, x, y, 0;

  Eigen::Vector4d grad_n;
  grad_n[0] = 2.0 * grad_r.cwiseProduct(dw).sum();
  grad_n[1] = 2.0 * grad_r.cwiseProduct(dx).sum();
  grad_n[2] = 2.0 * grad_r.cwiseProduct(dy).sum();
  grad_n[3] = 2.0 * grad_r.cwiseProduct(dz).sum();

  // Through the normalization: project out the radial component.
  return (grad_n - n * n.dot(grad_n)) / norm;
}

Eigen::Matrix3d covariance3d(const Eigen::Vector4d& quat, const Eigen::Vector3d& log_scale) {
  const Eigen::Matrix3d r = quat_to_rotation(quat);
  const Eigen::Vector3d v = (2.0 * log_scale).array().exp();
  return r * v.asDiagonal() * r.transpose();
}

void covariance3d_backward(const Eigen::Vector4d& quat, const Eigen::Vector3d& log_scale,
                           const Eigen::Matrix3d& grad_sigma, Eigen::Vector4d& grad_quat,
                           Eigen::Vector3d& grad_log_scale) {
  const Eigen::Matrix3d r = quat_to_rotation(quat);
  const Eigen::Vector3d v = (2.0 * log_scale).array().exp();

  const Eigen::Matrix3d gs = 0.5 * (grad_sigma + grad_sigma.transpose());
  const Eigen::Matrix3d grad_r = 2.0 * gs * r * v.asDiagonal();
  const Eigen::Vector3d grad_v = (r.transpose() * gs * r).diagonal();

  grad_quat = quat_to_rotation_backward(quat, grad_r);
  grad_log_scale = grad_v.array() * 2.0 * v.array();
}

}  // namespace splat
