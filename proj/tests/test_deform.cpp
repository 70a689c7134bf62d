#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "splat/deform.hpp"
#include "test_util.hpp"

using namespace splat;

namespace {

constexpr double kPi = 3.14159265358979323846;

DeformField small_random_field(std::uint64_t seed) {
  DeformConfig cfg;
  cfg.pos_freqs = 2;
  cfg.time_freqs = 1;
  cfg.hidden_width = 8;
  cfg.hidden_depth = 2;
  DeformField field(cfg, seed);
  // The head is zero-initialized; fill it so outputs are nontrivial.
  std::mt19937_64 rng(seed + 17);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  auto& head_w = field.weights().back();
  auto& head_b = field.biases().back();
  for (int i = 0; i < head_w.size(); ++i) head_w.data()[i] = u(rng);
  for (int i = 0; i < head_b.size(); ++i) head_b.data()[i] = u(rng);
  return field;
}

// Plain reference forward pass: explicit loops, no shared code with the
// library implementation beyond reading the same weight matrices.
DeformDelta reference_forward(const DeformField& field, const Eigen::Vector3d& p, double t) {
  const DeformConfig& cfg = field.config();
  std::vector<double> feat;
  for (int d = 0; d < 3; ++d) {
    for (int k = 0; k < cfg.pos_freqs; ++k) {
      const double f = kPi * std::pow(2.0, k);
      feat.push_back(std::sin(f * p[d]));
      feat.push_back(std::cos(f * p[d]));
    }
    feat.push_back(p[d]);
  }
  for (int k = 0; k < cfg.time_freqs; ++k) {
    const double f = kPi * std::pow(2.0, k);
    feat.push_back(std::sin(f * t));
    feat.push_back(std::cos(f * t));
  }
  feat.push_back(t);

  std::vector<double> h = feat;
  for (int layer = 0; layer < field.layer_count(); ++layer) {
    const auto& w = field.weights()[layer];
    const auto& b = field.biases()[layer];
    std::vector<double> next(static_cast<std::size_t>(w.rows()));
    for (int r = 0; r < w.rows(); ++r) {
      double s = b[r];
      for (int c = 0; c < w.cols(); ++c) s += w(r, c) * h[static_cast<std::size_t>(c)];
      const bool is_head = layer == field.layer_count() - 1;
      next[static_cast<std::size_t>(r)] = is_head ? s : std::max(0.0, s);
    }
    h = std::move(next);
  }
  DeformDelta delta;
  delta.position = Eigen::Vector3d(h[0], h[1], h[2]);
  delta.log_scale = Eigen::Vector3d(h[3], h[4], h[5]);
  delta.rotation = Eigen::Vector4d(h[6], h[7], h[8], h[9]);
  return delta;
}

}  // namespace

TEST_CASE("encoding of zero is all zero sines and unit cosines") {
  Eigen::VectorXd x(2);
  x << 0.0, 0.0;
  const Eigen::VectorXd enc = positional_encoding(x, 3);
  REQUIRE(enc.size() == 2 * (2 * 3 + 1));
  for (int d = 0; d < 2; ++d) {
    const int base = d * 7;
    for (int k = 0; k < 3; ++k) {
      CHECK(enc[base + 2 * k] == 0.0);      // sin
      CHECK(enc[base + 2 * k + 1] == 1.0);  // cos
    }
    CHECK(enc[base + 6] == 0.0);  // raw value
  }
}

TEST_CASE("zero frequencies passes the raw value through") {
  Eigen::VectorXd x(3);
  x << 0.3, -0.7, 2.0;
  const Eigen::VectorXd enc = positional_encoding(x, 0);
  REQUIRE(enc.size() == 3);
  CHECK(enc[0] == 0.3);
  CHECK(enc[1] == -0.7);
  CHECK(enc[2] == 2.0);
}

TEST_CASE("first frequency band at one half is the quarter-turn point") {
  Eigen::VectorXd x(1);
  x << 0.5;
  const Eigen::VectorXd enc = positional_encoding(x, 1);
  REQUIRE(enc.size() == 3);
  CHECK(enc[0] == doctest::Approx(1.0).epsilon(1e-15));  // sin(pi/2)
  CHECK(enc[1] == doctest::Approx(0.0).epsilon(1e-15));  // cos(pi/2)
  CHECK(enc[2] == 0.5);
}

TEST_CASE("encoding backward matches finite differences") {
  Eigen::VectorXd x(3);
  x << 0.21, -0.43, 0.77;
  const int L = 4;
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd up(3 * (2 * L + 1));
  for (int i = 0; i < up.size(); ++i) up[i] = u(rng);
  const Eigen::VectorXd g = positional_encoding_backward(x, L, up);
  for (int d = 0; d < 3; ++d) {
    const double fd = testutil::central_diff(
        [&](double v) {
          Eigen::VectorXd x2 = x;
          x2[d] = v;
          return positional_encoding(x2, L).dot(up);
        },
        x[d], 1e-6);
    CHECK(testutil::rel_err(g[d], fd) < 1e-6);
  }
}

TEST_CASE("fresh field is the exact identity deformation") {
  DeformField field(DeformConfig{}, 99);
  const DeformDelta d = field.evaluate({0.3, -0.8, 1.2}, 0.6);
  CHECK(d.position == Eigen::Vector3d::Zero());
  CHECK(d.log_scale == Eigen::Vector3d::Zero());
  CHECK(d.rotation == Eigen::Vector4d::Zero());
}

TEST_CASE("default configuration wires the documented shapes") {
  DeformField field(DeformConfig{}, 1);
  CHECK(field.config().input_dim() == 3 * 21 + 13);
  REQUIRE(field.layer_count() == 5);
  CHECK(field.weights()[0].rows() == 64);
  CHECK(field.weights()[0].cols() == 76);
  CHECK(field.weights()[4].rows() == 10);
  CHECK(field.weights()[4].cols() == 64);
  // Zero head at init.
  CHECK(field.weights()[4].norm() == 0.0);
  CHECK(field.biases()[4].norm() == 0.0);
}

TEST_CASE("field output matches a hand-rolled reference network") {
  const DeformField field = small_random_field(52);
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 8; ++trial) {
    const Eigen::Vector3d p(u(rng), u(rng), u(rng));
    const double t = 0.5 + 0.5 * u(rng);
    const DeformDelta mine = field.evaluate(p, t);
    const DeformDelta ref = reference_forward(field, p, t);
    CHECK((mine.position - ref.position).norm() < 1e-12);
    CHECK((mine.log_scale - ref.log_scale).norm() < 1e-12);
    CHECK((mine.rotation - ref.rotation).norm() < 1e-12);
  }
}

TEST_CASE("outputs depend on time") {
  const DeformField field = small_random_field(54);
  const Eigen::Vector3d p(0.3, 0.1, -0.4);
  const DeformDelta a = field.evaluate(p, 0.1);
  const DeformDelta b = field.evaluate(p, 0.9);
  CHECK((a.position - b.position).norm() > 1e-9);
}

TEST_CASE("batched forward matches per-primitive evaluation") {
  const DeformField field = small_random_field(55);
  std::vector<Eigen::Vector3d> ps = {{0.1, 0.2, 0.3}, {-0.4, 0.0, 0.9}, {0.7, -0.7, 0.2}};
  std::vector<DeformDelta> out;
  field.forward(ps, 0.35, out);
  REQUIRE(out.size() == ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const DeformDelta d = field.evaluate(ps[i], 0.35);
    CHECK((out[i].position - d.position).norm() == 0.0);
    CHECK((out[i].rotation - d.rotation).norm() == 0.0);
  }
}

TEST_CASE("zero upstream gradient produces zero parameter gradients") {
  const DeformField field = small_random_field(56);
  DeformGradients grads = field.zero_gradients();
  const Eigen::Vector3d gp = field.backward({0.2, 0.4, -0.1}, 0.5, DeformDelta{}, grads);
  CHECK(gp.norm() == 0.0);
  for (const auto& w : grads.weights) CHECK(w.norm() == 0.0);
  for (const auto& b : grads.biases) CHECK(b.norm() == 0.0);
}

namespace {

double scalar_probe(const DeformField& field, const Eigen::Vector3d& p, double t,
                    const DeformDelta& up) {
  const DeformDelta d = field.evaluate(p, t);
  return d.position.dot(up.position) + d.log_scale.dot(up.log_scale) +
         d.rotation.dot(up.rotation);
}

}  // namespace

TEST_CASE("weight and bias gradients match finite differences") {
  DeformField field = small_random_field(57);
  // Nudge hidden weights too so every layer participates.
  std::mt19937_64 rng(58);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  const Eigen::Vector3d p(0.25, -0.6, 0.45);
  const double t = 0.4;
  DeformDelta up;
  up.position = {u(rng), u(rng), u(rng)};
  up.log_scale = {u(rng), u(rng), u(rng)};
  up.rotation = {u(rng), u(rng), u(rng), u(rng)};

  DeformGradients grads = field.zero_gradients();
  field.backward(p, t, up, grads);

  std::uniform_int_distribution<int> layer_pick(0, field.layer_count() - 1);
  int checked = 0;
  for (int trial = 0; trial < 60 && checked < 25; ++trial) {
    const int layer = layer_pick(rng);
    auto& w = field.weights()[layer];
    std::uniform_int_distribution<int> rpick(0, static_cast<int>(w.rows()) - 1);
    std::uniform_int_distribution<int> cpick(0, static_cast<int>(w.cols()) - 1);
    const int r = rpick(rng), c = cpick(rng);
    const double orig = w(r, c);
    const double h = 1e-6;
    w(r, c) = orig + h;
    const double plus = scalar_probe(field, p, t, up);
    w(r, c) = orig - h;
    const double minus = scalar_probe(field, p, t, up);
    w(r, c) = orig;
    const double fd = (plus - minus) / (2 * h);
    if (std::abs(fd) < 1e-9) continue;  // dead rectifier path
    CHECK(testutil::rel_err(grads.weights[layer](r, c), fd) < 1e-3);
    ++checked;
  }
  CHECK(checked >= 10);

  for (int layer = 0; layer < field.layer_count(); ++layer) {
    auto& b = field.biases()[layer];
    const int r = 0;
    const double orig = b[r];
    const double h = 1e-6;
    b[r] = orig + h;
    const double plus = scalar_probe(field, p, t, up);
    b[r] = orig - h;
    const double minus = scalar_probe(field, p, t, up);
    b[r] = orig;
    const double fd = (plus - minus) / (2 * h);
    if (std::abs(fd) < 1e-9) continue;
    CHECK(testutil::rel_err(grads.biases[layer][r], fd) < 1e-3);
  }
}

TEST_CASE("canonical position gradient matches finite differences") {
  const DeformField field = small_random_field(59);
  const Eigen::Vector3d p(0.15, 0.35, -0.55);
  const double t = 0.7;
  DeformDelta up;
  up.position = {0.3, -0.2, 0.1};
  up.log_scale = {0.05, 0.15, -0.1};
  up.rotation = {0.02, -0.07, 0.04, 0.09};

  DeformGradients grads = field.zero_gradients();
  const Eigen::Vector3d gp = field.backward(p, t, up, grads);
  for (int d = 0; d < 3; ++d) {
    const double fd = testutil::central_diff(
        [&](double v) {
          Eigen::Vector3d p2 = p;
          p2[d] = v;
          return scalar_probe(field, p2, t, up);
        },
        p[d], 1e-6);
    CHECK(testutil::rel_err(gp[d], fd) < 1e-3);
  }
}

TEST_CASE("temporal multiplier is one on the plateau") {
  TemporalOpacity temporal;
  temporal.t_appear = 0.2;
  temporal.span_raw = softplus_inv(0.5);  // plateau [0.2, 0.7]
  temporal.width_appear_raw = 0.0;
  temporal.width_disappear_raw = 0.0;
  CHECK(temporal_multiplier(temporal, 0.2) == 1.0);
  CHECK(temporal_multiplier(temporal, 0.45) == 1.0);
  CHECK(temporal_multiplier(temporal, 0.7) == 1.0);
}

TEST_CASE("one width before appearance the multiplier is exp(-1/2)") {
  TemporalOpacity temporal;
  temporal.t_appear = 0.5;
  temporal.span_raw = softplus_inv(0.3);
  temporal.width_appear_raw = softplus_inv(0.1 - 1e-3);  // width_appear = 0.1
  const double at = temporal.t_appear - temporal.width_appear();
  CHECK(temporal_multiplier(temporal, at) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
}

TEST_CASE("very wide ramps flatten the multiplier toward one") {
  TemporalOpacity temporal;
  temporal.t_appear = 0.5;
  temporal.span_raw = softplus_inv(0.01);
  temporal.width_appear_raw = 80.0;  // softplus ~ 80
  temporal.width_disappear_raw = 80.0;
  CHECK(temporal_multiplier(temporal, 0.0) > 0.99);
  CHECK(temporal_multiplier(temporal, 1.0) > 0.99);
}

TEST_CASE("temporal multiplier is continuous at the plateau edges") {
  TemporalOpacity temporal;
  temporal.t_appear = 0.3;
  temporal.span_raw = softplus_inv(0.2);
  temporal.width_appear_raw = -1.0;
  temporal.width_disappear_raw = -0.5;
  const double eps = 1e-9;
  CHECK(std::abs(temporal_multiplier(temporal, 0.3 - eps) - 1.0) < 1e-6);
  const double td = temporal.t_disappear();
  CHECK(std::abs(temporal_multiplier(temporal, td + eps) - 1.0) < 1e-6);
}

TEST_CASE("temporal gradients match finite differences on both ramps") {
  TemporalOpacity temporal;
  temporal.t_appear = 0.4;
  temporal.span_raw = softplus_inv(0.2);
  temporal.width_appear_raw = -0.3;
  temporal.width_disappear_raw = 0.2;

  const double probes[] = {0.25, 0.8};  // one on each ramp
  for (const double t : probes) {
    const TemporalGrad g = temporal_multiplier_backward(temporal, t, 1.0);

    auto fd_param = [&](auto setter, double base) {
      return testutil::central_diff(
          [&](double v) {
            TemporalOpacity t2 = temporal;
            setter(t2, v);
            return temporal_multiplier(t2, t);
          },
          base, 1e-6);
    };
    const double fd_ta =
        fd_param([](TemporalOpacity& o, double v) { o.t_appear = v; }, temporal.t_appear);
    CHECK(testutil::rel_err(g.t_appear, fd_ta) < 1e-5);
    const double fd_wa = fd_param([](TemporalOpacity& o, double v) { o.width_appear_raw = v; },
                                  temporal.width_appear_raw);
    CHECK(testutil::rel_err(g.width_appear_raw, fd_wa) < 1e-5);
    const double fd_span =
        fd_param([](TemporalOpacity& o, double v) { o.span_raw = v; }, temporal.span_raw);
    CHECK(testutil::rel_err(g.span_raw, fd_span) < 1e-5);
    const double fd_wd = fd_param([](TemporalOpacity& o, double v) { o.width_disappear_raw = v; },
                                  temporal.width_disappear_raw);
    CHECK(testutil::rel_err(g.width_disappear_raw, fd_wd) < 1e-5);
  }
}
