#include "splat/sh.hpp"

#include <stdexcept>

namespace splat {

namespace {

constexpr double kC0 = kShC0;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                           -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
                           0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                           -0.5900435899266435};

void check_degree(int degree) {
  if (degree < 0 || degree > 3) throw std::invalid_argument("SH degree must be in 0..3");
}

// Basis and, when grad != nullptr, its Jacobian w.r.t. the direction.
void basis_impl(int degree, const Eigen::Vector3d& dir, Eigen::VectorXd& basis,
                Eigen::Matrix<double, Eigen::Dynamic, 3>* grad) {
  const double x = dir.x(), y = dir.y(), z = dir.z();
  const int n = sh_coeff_count(degree);
  basis.resize(n);
  if (grad) grad->setZero(n, 3);

  basis[0] = kC0;
  if (degree < 1) return;

  basis[1] = -kC1 * y;
  basis[2] = kC1 * z;
  basis[3] = -kC1 * x;
  if (grad) {
    (*grad)(1, 1) = -kC1;
    (*grad)(2, 2) = kC1;
    (*grad)(3, 0) = -kC1;
  }
  if (degree < 2) return;

  const double xx = x * x, yy = y * y, zz = z * z;
  basis[4] = kC2[0] * x * y;
  basis[5] = kC2[1] * y * z;
  basis[6] = kC2[2] * (2.0 * zz - xx - yy);
  basis[7] = kC2[3] * x * z;
  basis[8] = kC2[4] * (xx - yy);
  if (grad) {
    grad->row(4) << kC2[0] * y, kC2[0] * x, 0.0;
    grad->row(5) << 0.0, kC2[1] * z, kC2[1] * y;
    grad->row(6) << -2.0 * kC2[2] * x, -2.0 * kC2[2] * y, 4.0 * kC2[2] * z;
    grad->row(7) << kC2[3] * z, 0.0, kC2[3] * x;
    grad->row(8) << 2.0 * kC2[4] * x, -2.0 * kC2[4] * y, 0.0;
  }
  if (degree < 3) return;

  basis[9] = kC3[0] * y * (3.0 * xx - yy);
  basis[10] = kC3[1] * x * y * z;
  basis[11] = kC3[2] * y * (4.0 * zz - xx - yy);
  basis[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
  basis[13] = kC3[4] * x * (4.0 * zz - xx - yy);
  basis[14] = kC3[5] * z * (xx - yy);
  basis[15] = kC3[6] * x * (xx - 3.0 * yy);
  if (grad) {
    grad->row(9) << 6.0 * kC3[0] * x * y, kC3[0] * (3.0 * xx - 3.0 * yy), 0.0;
    grad->row(10) << kC3[1] * y * z, kC3[1] * x * z, kC3[1] * x * y;
    grad->row(11) << -2.0 * kC3[2] * x * y, kC3[2] * (4.0 * zz - xx - 3.0 * yy),
        8.0 * kC3[2] * y * z;
    grad->row(12) << -6.0 * kC3[3] * x * z, -6.0 * kC3[3] * y * z,
        kC3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy);
    grad->row(13) << kC3[4] * (4.0 * zz - 3.0 * xx - yy), -2.0 * kC3[4] * x * y,
        8.0 * kC3[4] * x * z;
    grad->row(14) << 2.0 * kC3[5] * x * z, -2.0 * kC3[5] * y * z, kC3[5] * (xx - yy);
    grad->row(15) << kC3[6] * (3.0 * xx - 3.0 * yy), -6.0 * kC3[6] * x * y, 0.0;
  }
}

}  // namespace

Eigen::VectorXd sh_basis(int degree, const Eigen::Vector3d& dir) {
  check_degree(degree);
  Eigen::VectorXd basis;
  basis_impl(degree, dir, basis, nullptr);
  return basis;
}

Eigen::VectorXd sh_eval(const Eigen::MatrixXd& coeffs, int degree, const Eigen::Vector3d& dir) {
  check_degree(degree);
  if (coeffs.rows() != sh_coeff_count(degree))
    throw std::invalid_argument("SH coefficient count does not match degree");

  Eigen::VectorXd basis;
  basis_impl(degree, dir, basis, nullptr);
  Eigen::VectorXd color = coeffs.transpose() * basis;
  color.array() += 0.5;
  return color.cwiseMax(0.0);
}

void sh_eval_backward(const Eigen::MatrixXd& coeffs, int degree, const Eigen::Vector3d& dir,
                      const Eigen::VectorXd& grad_color, Eigen::MatrixXd& grad_coeffs,
                      Eigen::Vector3d& grad_dir) {
  check_degree(degree);
  if (coeffs.rows() != sh_coeff_count(degree))
    throw std::invalid_argument("SH coefficient count does not match degree");
  if (grad_color.size() != coeffs.cols())
    throw std::invalid_argument("SH gradient channel count mismatch");

  Eigen::VectorXd basis;
  Eigen::Matrix<double, Eigen::Dynamic, 3> basis_jac;
  basis_impl(degree, dir, basis, &basis_jac);

  // Channels clamped in the forward pass are flat; mask their gradient.
  Eigen::VectorXd raw = coeffs.transpose() * basis;
  raw.array() += 0.5;
  Eigen::VectorXd gc = grad_color;
  for (Eigen::Index c = 0; c < gc.size(); ++c)
    if (raw[c] <= 0.0) gc[c] = 0.0;

  grad_coeffs = basis * gc.transpose();
  grad_dir = basis_jac.transpose() * (coeffs * gc);
}

}  // namespace splat
