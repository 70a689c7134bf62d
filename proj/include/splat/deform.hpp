#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "splat/types.hpp"

namespace splat {

/// Frequency encoding: per input dimension [sin(2^k pi x), cos(2^k pi x)]
/// for k = 0..L-1, with the raw value appended, so each dimension expands
/// to 2L+1 features.
Eigen::VectorXd positional_encoding(const Eigen::VectorXd& x, int num_freqs);

/// d(encoding)/dx contracted with an upstream gradient.
Eigen::VectorXd positional_encoding_backward(const Eigen::VectorXd& x, int num_freqs,
                                             const Eigen::VectorXd& grad_enc);

struct DeformConfig {
  int pos_freqs = 10;
  int time_freqs = 6;
  int hidden_width = 64;
  int hidden_depth = 4;

  int input_dim() const { return 3 * (2 * pos_freqs + 1) + (2 * time_freqs + 1); }
};

/// Offsets produced by the field for one primitive.
struct DeformDelta {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
  Eigen::Vector4d rotation = Eigen::Vector4d::Zero();
};

/// Gradients w.r.t. every MLP weight and bias, same shapes as the field.
struct DeformGradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  void add(const DeformGradients& other);
  void scale(double s);
};

/// MLP over (encoded position, encoded time) emitting position, log-scale
/// and rotation offsets for smoke primitives. Hidden layers use the
/// rectifier; the output head is zero-initialized so a fresh field is the
/// exact identity deformation.
class DeformField {
 public:
  DeformField() : DeformField(DeformConfig{}, 0) {}
  DeformField(const DeformConfig& config, std::uint64_t seed);

  const DeformConfig& config() const { return config_; }
  int layer_count() const { return static_cast<int>(weights_.size()); }
  const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
  const std::vector<Eigen::VectorXd>& biases() const { return biases_; }
  std::vector<Eigen::MatrixXd>& weights() { return weights_; }
  std::vector<Eigen::VectorXd>& biases() { return biases_; }

  DeformDelta evaluate(const Eigen::Vector3d& position, double time) const;

  /// Batched forward matching evaluate row-for-row.
  void forward(const std::vector<Eigen::Vector3d>& positions, double time,
               std::vector<DeformDelta>& out) const;

  /// Reverse-mode through the MLP and encodings for one primitive.
  /// Accumulates weight/bias gradients into `grads` (which must be
  /// zero-shaped via zero_gradients) and returns the gradient w.r.t. the
  /// canonical position.
  Eigen::Vector3d backward(const Eigen::Vector3d& position, double time,
                           const DeformDelta& grad_delta, DeformGradients& grads) const;

  DeformGradients zero_gradients() const;

  bool finite() const;

 private:
  DeformConfig config_;
  std::vector<Eigen::MatrixXd> weights_;  // layer i: out_i x in_i
  std::vector<Eigen::VectorXd> biases_;
};

/// Plateau-with-ramps multiplier: 1 on [t_appear, t_disappear], Gaussian
/// falloff outside with the appearance/disappearance widths.
double temporal_multiplier(const TemporalOpacity& temporal, double t);

struct TemporalGrad {
  double t_appear = 0.0;
  double width_appear_raw = 0.0;
  double span_raw = 0.0;
  double width_disappear_raw = 0.0;
};

TemporalGrad temporal_multiplier_backward(const TemporalOpacity& temporal, double t,
                                          double grad_multiplier);

}  // namespace splat
