#include "splat/deform.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace splat {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Eigen::VectorXd positional_encoding(const Eigen::VectorXd& x, int num_freqs) {
  if (num_freqs < 0) throw std::invalid_argument("frequency count must be non-negative");
  const Eigen::Index dims = x.size();
  Eigen::VectorXd out((2 * num_freqs + 1) * dims);
  Eigen::Index at = 0;
  for (Eigen::Index d = 0; d < dims; ++d) {
    double freq = kPi;
    for (int k = 0; k < num_freqs; ++k, freq *= 2.0) {
      out[at++] = std::sin(freq * x[d]);
      out[at++] = std::cos(freq * x[d]);
    }
    out[at++] = x[d];
  }
  return out;
}

Eigen::VectorXd positional_encoding_backward(const Eigen::VectorXd& x, int num_freqs,
                                             const Eigen::VectorXd& grad_enc) {
  const Eigen::Index dims = x.size();
  if (grad_enc.size() != (2 * num_freqs + 1) * dims)
    throw std::invalid_argument("encoding gradient size mismatch");
  Eigen::VectorXd grad_x = Eigen::VectorXd::Zero(dims);
  Eigen::Index at = 0;
  for (Eigen::Index d = 0; d < dims; ++d) {
    double freq = kPi;
    for (int k = 0; k < num_freqs; ++k, freq *= 2.0) {
      grad_x[d] += grad_enc[at++] * freq * std::cos(freq * x[d]);
      grad_x[d] -= grad_enc[at++] * freq * std::sin(freq * x[d]);
    }
    grad_x[d] += grad_enc[at++];
  }
  return grad_x;
}

void DeformGradients::add(const DeformGradients& other) {
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i] += other.weights[i];
    biases[i] += other.biases[i];
  }
}

void DeformGradients::scale(double s) {
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i] *= s;
    biases[i] *= s;
  }
}

DeformField::DeformField(const DeformConfig& config, std::uint64_t seed) : config_(config) {
  if (config.hidden_depth < 1) throw std::invalid_argument("deformation MLP needs a hidden layer");
  std::mt19937_64 rng(seed);

  auto xavier = [&rng](Eigen::Index rows, Eigen::Index cols) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Eigen::MatrixXd w(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = dist(rng);
    return w;
  };

  int in = config.input_dim();
  for (int i = 0; i < config.hidden_depth; ++i) {
    weights_.push_back(xavier(config.hidden_width, in));
    biases_.push_back(Eigen::VectorXd::Zero(config.hidden_width));
    in = config.hidden_width;
  }
  // Zero head: a fresh field is the identity deformation.
  weights_.push_back(Eigen::MatrixXd::Zero(10, in));
  biases_.push_back(Eigen::VectorXd::Zero(10));
}

DeformGradients DeformField::zero_gradients() const {
  DeformGradients g;
  g.weights.reserve(weights_.size());
  g.biases.reserve(biases_.size());
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    g.weights.push_back(Eigen::MatrixXd::Zero(weights_[i].rows(), weights_[i].cols()));
    g.biases.push_back(Eigen::VectorXd::Zero(biases_[i].size()));
  }
  return g;
}

bool DeformField::finite() const {
  for (std::size_t i = 0; i < weights_.size(); ++i)
    if (!weights_[i].allFinite() || !biases_[i].allFinite()) return false;
  return true;
}

namespace {

Eigen::VectorXd encode_input(const DeformConfig& config, const Eigen::Vector3d& position,
                             double time) {
  Eigen::VectorXd enc(config.input_dim());
  enc.head(3 * (2 * config.pos_freqs + 1)) = positional_encoding(position, config.pos_freqs);
  Eigen::VectorXd t(1);
  t[0] = time;
  enc.tail(2 * config.time_freqs + 1) = positional_encoding(t, config.time_freqs);
  return enc;
}

DeformDelta split_head(const Eigen::VectorXd& out) {
  DeformDelta delta;
  delta.position = out.segment<3>(0);
  delta.log_scale = out.segment<3>(3);
  delta.rotation = out.segment<4>(6);
  return delta;
}

}  // namespace

DeformDelta DeformField::evaluate(const Eigen::Vector3d& position, double time) const {
  Eigen::VectorXd h = encode_input(config_, position, time);
  const int layers = layer_count();
  for (int i = 0; i < layers - 1; ++i) h = ((weights_[i] * h + biases_[i]).array().max(0.0)).matrix();
  Eigen::VectorXd out = weights_[layers - 1] * h + biases_[layers - 1];
  return split_head(out);
}

void DeformField::forward(const std::vector<Eigen::Vector3d>& positions, double time,
                          std::vector<DeformDelta>& out) const {
  out.resize(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) out[i] = evaluate(positions[i], time);
}

Eigen::Vector3d DeformField::backward(const Eigen::Vector3d& position, double time,
                                      const DeformDelta& grad_delta,
                                      DeformGradients& grads) const {
  const int layers = layer_count();
  std::vector<Eigen::VectorXd> acts(layers);  // inputs of each layer
  Eigen::VectorXd h = encode_input(config_, position, time);
  for (int i = 0; i < layers - 1; ++i) {
    acts[i] = h;
    h = ((weights_[i] * h + biases_[i]).array().max(0.0)).matrix();
  }
  acts[layers - 1] = h;

  Eigen::VectorXd g(10);
  g.segment<3>(0) = grad_delta.position;
  g.segment<3>(3) = grad_delta.log_scale;
  g.segment<4>(6) = grad_delta.rotation;

  for (int i = layers - 1; i >= 0; --i) {
    grads.weights[i] += g * acts[i].transpose();
    grads.biases[i] += g;
    Eigen::VectorXd upstream = weights_[i].transpose() * g;
    if (i > 0) {
      // Rectifier mask of this layer's input (which is layer i-1's output).
      for (Eigen::Index k = 0; k < upstream.size(); ++k)
        if (acts[i][k] <= 0.0) upstream[k] = 0.0;
    }
    g = std::move(upstream);
  }

  const int pos_features = 3 * (2 * config_.pos_freqs + 1);
  return positional_encoding_backward(position, config_.pos_freqs, g.head(pos_features));
}

double temporal_multiplier(const TemporalOpacity& temporal, double t) {
  const double ta = temporal.t_appear;
  const double td = temporal.t_disappear();
  if (t < ta) {
    const double u = (t - ta) / temporal.width_appear();
    return std::exp(-0.5 * u * u);
  }
  if (t > td) {
    const double u = (t - td) / temporal.width_disappear();
    return std::exp(-0.5 * u * u);
  }
  return 1.0;
}

TemporalGrad temporal_multiplier_backward(const TemporalOpacity& temporal, double t,
                                          double grad_multiplier) {
  TemporalGrad g;
  const double ta = temporal.t_appear;
  const double td = temporal.t_disappear();
  if (t < ta) {
    const double w = temporal.width_appear();
    const double u = (t - ta) / w;
    const double m = std::exp(-0.5 * u * u);
    const double dm_dta = m * (t - ta) / (w * w);
    const double dm_dw = m * (t - ta) * (t - ta) / (w * w * w);
    g.t_appear = grad_multiplier * dm_dta;
    g.width_appear_raw = grad_multiplier * dm_dw * sigmoid(temporal.width_appear_raw);
  } else if (t > td) {
    const double w = temporal.width_disappear();
    const double u = (t - td) / w;
    const double m = std::exp(-0.5 * u * u);
    const double dm_dtd = m * (t - td) / (w * w);
    const double dm_dw = m * (t - td) * (t - td) / (w * w * w);
    g.t_appear = grad_multiplier * dm_dtd;  // t_disappear shifts with t_appear
    g.span_raw = grad_multiplier * dm_dtd * sigmoid(temporal.span_raw);
    g.width_disappear_raw = grad_multiplier * dm_dw * sigmoid(temporal.width_disappear_raw);
  }
  return g;
}

}  // namespace splat
