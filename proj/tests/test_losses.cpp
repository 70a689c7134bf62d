#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>

#include "splat/errors.hpp"
#include "splat/losses.hpp"
#include "splat/sh.hpp"
#include "test_util.hpp"

using namespace splat;

namespace {

Image random_image(int w, int h, int c, std::uint64_t seed, double lo = 0.1, double hi = 0.9) {
  Image img(w, h, c);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = u(rng);
  return img;
}

GaussianPrimitive smoke_primitive(double opacity_rgb, const Eigen::Vector3d& color,
                                  double gap_raw = 0.0) {
  GaussianPrimitive g;
  g.opacity_logit = logit(opacity_rgb);
  g.opacity_gap_raw = gap_raw;
  g.sh_rgb = Eigen::MatrixXd::Zero(1, 3);
  for (int c = 0; c < 3; ++c) g.sh_rgb(0, c) = (color[c] - 0.5) / kShC0;
  g.sh_thermal = Eigen::VectorXd::Zero(1);
  g.temporal = TemporalOpacity{};
  return g;
}

GaussianSet smoke_set(std::initializer_list<GaussianPrimitive> prims) {
  GaussianSet set;
  set.kind = SetKind::Smoke;
  set.sh_degree_rgb = 0;
  set.sh_degree_thermal = 0;
  set.primitives = prims;
  return set;
}

}  // namespace

TEST_CASE("total loss of all-zero terms is zero") {
  CHECK(total_loss(LossTerms{}, LossWeights{}) == 0.0);
}

TEST_CASE("unit terms under the default weights sum to 3.75") {
  LossTerms terms;
  terms.render = terms.smoke_alpha = terms.smoke_color = terms.mono = terms.depth = terms.mask =
      1.0;
  CHECK(total_loss(terms, LossWeights{}) == doctest::Approx(3.75).epsilon(1e-15));
}

TEST_CASE("zeroing one weight removes exactly that contribution") {
  LossTerms terms;
  terms.render = 0.5;
  terms.depth = 2.0;
  LossWeights weights;
  const double full = total_loss(terms, weights);
  weights.depth = 0.0;
  CHECK(total_loss(terms, weights) == doctest::Approx(full - 2.0 * 2.0).epsilon(1e-15));
}

TEST_CASE("a non-finite term raises a divergence error naming the term") {
  LossTerms terms;
  terms.mono = std::numeric_limits<double>::quiet_NaN();
  try {
    total_loss(terms, LossWeights{});
    FAIL("expected TrainingDivergence");
  } catch (const TrainingDivergence& e) {
    CHECK(std::string(e.what()).find("mono") != std::string::npos);
  }
  terms.mono = 0.0;
  terms.depth = std::numeric_limits<double>::infinity();
  try {
    total_loss(terms, LossWeights{});
    FAIL("expected TrainingDivergence");
  } catch (const TrainingDivergence& e) {
    CHECK(std::string(e.what()).find("depth") != std::string::npos);
  }
}

TEST_CASE("render loss of identical images is zero") {
  const Image a = random_image(16, 16, 3, 61);
  Image grad;
  CHECK(render_loss(a, a, 0.2, grad) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("pure L1 render loss of a uniform offset is the offset") {
  Image gt(16, 16, 1, 0.4);
  Image pred(16, 16, 1, 0.5);
  Image grad;
  CHECK(render_loss(pred, gt, 0.0, grad) == doctest::Approx(0.1).epsilon(1e-12));
  // Gradient of mean L1: sign / count at every pixel.
  CHECK(grad.at(3, 3) == doctest::Approx(1.0 / 256.0).epsilon(1e-12));
}

TEST_CASE("render loss gradient matches finite differences") {
  Image pred = random_image(16, 16, 1, 62);
  const Image gt = random_image(16, 16, 1, 63);
  Image grad;
  const double val = render_loss(pred, gt, 0.2, grad);
  CHECK(val > 0.0);
  std::mt19937_64 rng(64);
  std::uniform_int_distribution<int> pick(0, 15);
  for (int trial = 0; trial < 20; ++trial) {
    const int x = pick(rng), y = pick(rng);
    const double orig = pred.at(x, y);
    const double h = 1e-5;
    Image dummy;
    pred.at(x, y) = orig + h;
    const double plus = render_loss(pred, gt, 0.2, dummy);
    pred.at(x, y) = orig - h;
    const double minus = render_loss(pred, gt, 0.2, dummy);
    pred.at(x, y) = orig;
    CHECK(testutil::rel_err(grad.at(x, y), (plus - minus) / (2 * h)) < 1e-3);
  }
}

TEST_CASE("homogeneous smoke opacities give zero variance") {
  const GaussianSet set = smoke_set({smoke_primitive(0.3, {0.5, 0.5, 0.5}),
                                     smoke_primitive(0.3, {0.2, 0.7, 0.4}),
                                     smoke_primitive(0.3, {0.9, 0.1, 0.6})});
  SetGrad grads = zero_grad_like(set);
  CHECK(smoke_alpha_loss(set, Modality::RGB, grads) == 0.0);
}

TEST_CASE("opacities 0.2 and 0.4 give population variance 0.01") {
  const GaussianSet set =
      smoke_set({smoke_primitive(0.2, {0.5, 0.5, 0.5}), smoke_primitive(0.4, {0.5, 0.5, 0.5})});
  SetGrad grads = zero_grad_like(set);
  CHECK(smoke_alpha_loss(set, Modality::RGB, grads) == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("single or empty smoke sets have zero opacity variance") {
  const GaussianSet one = smoke_set({smoke_primitive(0.7, {0.5, 0.5, 0.5})});
  SetGrad g1 = zero_grad_like(one);
  CHECK(smoke_alpha_loss(one, Modality::RGB, g1) == 0.0);
  GaussianSet empty;
  empty.kind = SetKind::Smoke;
  SetGrad g0 = zero_grad_like(empty);
  CHECK(smoke_alpha_loss(empty, Modality::RGB, g0) == 0.0);
}

TEST_CASE("opacity variance gradients match finite differences in both modalities") {
  GaussianSet set = smoke_set({smoke_primitive(0.2, {0.5, 0.5, 0.5}, 0.3),
                               smoke_primitive(0.5, {0.5, 0.5, 0.5}, -0.4),
                               smoke_primitive(0.7, {0.5, 0.5, 0.5}, 1.1)});
  for (const Modality m : {Modality::RGB, Modality::Thermal}) {
    SetGrad grads = zero_grad_like(set);
    smoke_alpha_loss(set, m, grads);
    for (std::size_t i = 0; i < set.size(); ++i) {
      const double fd_logit = testutil::central_diff(
          [&](double v) {
            GaussianSet s2 = set;
            s2.primitives[i].opacity_logit = v;
            SetGrad dummy = zero_grad_like(s2);
            return smoke_alpha_loss(s2, m, dummy);
          },
          set.primitives[i].opacity_logit);
      CHECK(testutil::rel_err(grads.primitives[i].opacity_logit, fd_logit) < 1e-4);
      const double fd_gap = testutil::central_diff(
          [&](double v) {
            GaussianSet s2 = set;
            s2.primitives[i].opacity_gap_raw = v;
            SetGrad dummy = zero_grad_like(s2);
            return smoke_alpha_loss(s2, m, dummy);
          },
          set.primitives[i].opacity_gap_raw);
      CHECK(testutil::rel_err(grads.primitives[i].opacity_gap_raw, fd_gap) < 1e-4);
      if (m == Modality::RGB) CHECK(grads.primitives[i].opacity_gap_raw == 0.0);
    }
  }
}

TEST_CASE("identical smoke colors give zero color variance") {
  const GaussianSet set =
      smoke_set({smoke_primitive(0.2, {0.6, 0.5, 0.4}), smoke_primitive(0.8, {0.6, 0.5, 0.4})});
  SetGrad grads = zero_grad_like(set);
  CHECK(smoke_color_loss(set, grads) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("one channel differing by 0.2 gives variance 0.01 over 3") {
  const GaussianSet set =
      smoke_set({smoke_primitive(0.5, {0.4, 0.5, 0.5}), smoke_primitive(0.5, {0.6, 0.5, 0.5})});
  SetGrad grads = zero_grad_like(set);
  CHECK(smoke_color_loss(set, grads) == doctest::Approx(0.01 / 3.0).epsilon(1e-9));
}

TEST_CASE("color variance gradients match finite differences") {
  GaussianSet set = smoke_set({smoke_primitive(0.3, {0.2, 0.6, 0.5}),
                               smoke_primitive(0.5, {0.7, 0.3, 0.5}),
                               smoke_primitive(0.6, {0.4, 0.5, 0.9})});
  SetGrad grads = zero_grad_like(set);
  smoke_color_loss(set, grads);
  for (std::size_t i = 0; i < set.size(); ++i)
    for (int c = 0; c < 3; ++c) {
      const double fd = testutil::central_diff(
          [&](double v) {
            GaussianSet s2 = set;
            s2.primitives[i].sh_rgb(0, c) = v;
            SetGrad dummy = zero_grad_like(s2);
            return smoke_color_loss(s2, dummy);
          },
          set.primitives[i].sh_rgb(0, c));
      CHECK(testutil::rel_err(grads.primitives[i].sh_rgb(0, c), fd) < 1e-4);
    }
}

TEST_CASE("gray primitives have zero channel variance") {
  const GaussianSet set =
      smoke_set({smoke_primitive(0.4, {0.3, 0.3, 0.3}), smoke_primitive(0.4, {0.8, 0.8, 0.8})});
  SetGrad grads = zero_grad_like(set);
  CHECK(mono_loss(set, grads) == 0.0);
}

TEST_CASE("a pure red primitive has channel variance two ninths") {
  const GaussianSet set = smoke_set({smoke_primitive(0.4, {1.0, 0.0, 0.0})});
  SetGrad grads = zero_grad_like(set);
  CHECK(mono_loss(set, grads) == doctest::Approx(2.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("channel variance gradients match finite differences") {
  GaussianSet set = smoke_set({smoke_primitive(0.3, {0.9, 0.2, 0.4}),
                               smoke_primitive(0.5, {0.1, 0.5, 0.8})});
  SetGrad grads = zero_grad_like(set);
  mono_loss(set, grads);
  for (std::size_t i = 0; i < set.size(); ++i)
    for (int c = 0; c < 3; ++c) {
      const double fd = testutil::central_diff(
          [&](double v) {
            GaussianSet s2 = set;
            s2.primitives[i].sh_rgb(0, c) = v;
            SetGrad dummy = zero_grad_like(s2);
            return mono_loss(s2, dummy);
          },
          set.primitives[i].sh_rgb(0, c));
      CHECK(testutil::rel_err(grads.primitives[i].sh_rgb(0, c), fd) < 1e-4);
    }
}

TEST_CASE("identical depth maps cost nothing") {
  const Image d = random_image(8, 8, 1, 65, 1.0, 5.0);
  const Image valid(8, 8, 1, 1.0);
  Image grad;
  CHECK(depth_loss(d, d, valid, grad) == 0.0);
}

TEST_CASE("a constant offset of one costs one") {
  Image a(8, 8, 1, 3.0);
  Image b(8, 8, 1, 2.0);
  const Image valid(8, 8, 1, 1.0);
  Image grad;
  CHECK(depth_loss(a, b, valid, grad) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("no valid pixels means zero loss and zero gradient") {
  const Image a = random_image(8, 8, 1, 66, 1.0, 5.0);
  const Image b = random_image(8, 8, 1, 67, 1.0, 5.0);
  const Image valid(8, 8, 1, 0.0);
  Image grad;
  CHECK(depth_loss(a, b, valid, grad) == 0.0);
  for (std::size_t i = 0; i < grad.size(); ++i) CHECK(grad.data()[i] == 0.0);
}

TEST_CASE("depth gradients respect the valid mask and match finite differences") {
  Image pred = random_image(8, 8, 1, 68, 1.0, 5.0);
  const Image target = random_image(8, 8, 1, 69, 1.0, 5.0);
  Image valid(8, 8, 1, 0.0);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 4; ++x) valid.at(x, y) = 1.0;  // left half valid
  Image grad;
  depth_loss(pred, target, valid, grad);
  CHECK(grad.at(6, 3) == 0.0);  // invalid pixel gets nothing
  const int x = 2, y = 5;
  const double h = 1e-5;
  const double orig = pred.at(x, y);
  Image dummy;
  pred.at(x, y) = orig + h;
  const double plus = depth_loss(pred, target, valid, dummy);
  pred.at(x, y) = orig - h;
  const double minus = depth_loss(pred, target, valid, dummy);
  pred.at(x, y) = orig;
  CHECK(testutil::rel_err(grad.at(x, y), (plus - minus) / (2 * h)) < 1e-3);
}

TEST_CASE("matching masks cost nothing and full disagreement costs one") {
  const Image m = random_image(8, 8, 1, 70, 0.0, 1.0);
  Image grad;
  CHECK(mask_loss(m, m, grad) == 0.0);
  Image ones(8, 8, 1, 1.0);
  Image zeros(8, 8, 1, 0.0);
  CHECK(mask_loss(ones, zeros, grad) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("mask loss rejects mismatched shapes and passes finite differences") {
  Image pred = random_image(8, 8, 1, 71, 0.1, 0.9);
  const Image gt = random_image(8, 8, 1, 72, 0.0, 1.0);
  const Image small(4, 4, 1, 0.0);
  Image grad;
  CHECK_THROWS_AS(mask_loss(pred, small, grad), std::invalid_argument);
  mask_loss(pred, gt, grad);
  const int x = 3, y = 6;
  const double h = 1e-6;
  const double orig = pred.at(x, y);
  Image dummy;
  pred.at(x, y) = orig + h;
  const double plus = mask_loss(pred, gt, dummy);
  pred.at(x, y) = orig - h;
  const double minus = mask_loss(pred, gt, dummy);
  pred.at(x, y) = orig;
  CHECK(testutil::rel_err(grad.at(x, y), (plus - minus) / (2 * h)) < 1e-3);
}
