#pragma once

#include <Eigen/Core>

namespace splat {

/// Number of spherical-harmonic coefficients for a given degree.
inline int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

/// Y00 normalization; the degree-0 color is kShC0 * coeff + 0.5.
inline constexpr double kShC0 = 0.28209479177387814;

/// Evaluate the real SH basis (degrees 0..3) for a unit direction.
/// `basis` must have sh_coeff_count(degree) entries on return.
Eigen::VectorXd sh_basis(int degree, const Eigen::Vector3d& dir);

/// Color from SH coefficients (rows = basis index, cols = channels) for a
/// unit view direction. A +0.5 offset is applied and the result is clamped
/// at zero from below.
Eigen::VectorXd sh_eval(const Eigen::MatrixXd& coeffs, int degree, const Eigen::Vector3d& dir);

/// Backward pass of sh_eval. `grad_color` has one entry per channel.
/// Outputs the gradient w.r.t. the coefficient matrix and w.r.t. the
/// (unit) direction. Channels clamped at zero in the forward pass
/// contribute no gradient.
void sh_eval_backward(const Eigen::MatrixXd& coeffs, int degree, const Eigen::Vector3d& dir,
                      const Eigen::VectorXd& grad_color, Eigen::MatrixXd& grad_coeffs,
                      Eigen::Vector3d& grad_dir);

}  // namespace splat
