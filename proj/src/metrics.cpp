#include "splat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace splat {

namespace {

constexpr int kWindow = 11;
constexpr int kHalf = kWindow / 2;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::vector<double>& gaussian_kernel() {
  static const std::vector<double> k = [] {
    std::vector<double> v(kWindow);
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
      const double d = i - kHalf;
      v[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
      sum += v[i];
    }
    for (double& x : v) x /= sum;
    return v;
  }();
  return k;
}

Image to_gray(const Image& img) {
  if (img.channels() == 1) return img;
  Image g(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      double s = 0.0;
      for (int c = 0; c < img.channels(); ++c) s += img.at(x, y, c);
      g.at(x, y) = s / img.channels();
    }
  return g;
}

// Separable valid convolution with the Gaussian window.
Image conv_valid(const Image& in) {
  const auto& k = gaussian_kernel();
  Image tmp(in.width() - 2 * kHalf, in.height(), 1);
  for (int y = 0; y < in.height(); ++y)
    for (int x = 0; x < tmp.width(); ++x) {
      double s = 0.0;
      for (int i = 0; i < kWindow; ++i) s += k[i] * in.at(x + i, y);
      tmp.at(x, y) = s;
    }
  Image out(tmp.width(), in.height() - 2 * kHalf, 1);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      double s = 0.0;
      for (int i = 0; i < kWindow; ++i) s += k[i] * tmp.at(x, y + i);
      out.at(x, y) = s;
    }
  return out;
}

// Transpose of conv_valid: scatter a valid-size map back to image size.
Image conv_valid_transpose(const Image& in, int width, int height) {
  const auto& k = gaussian_kernel();
  Image tmp(in.width(), height, 1);
  for (int y = 0; y < in.height(); ++y)
    for (int x = 0; x < in.width(); ++x) {
      const double v = in.at(x, y);
      for (int i = 0; i < kWindow; ++i) tmp.at(x, y + i) += k[i] * v;
    }
  Image out(width, height, 1);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < tmp.width(); ++x) {
      const double v = tmp.at(x, y);
      for (int i = 0; i < kWindow; ++i) out.at(x + i, y) += k[i] * v;
    }
  return out;
}

Image product(const Image& a, const Image& b) {
  Image out(a.width(), a.height(), 1);
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) out.at(x, y) = a.at(x, y) * b.at(x, y);
  return out;
}

double ssim_impl(const Image& a, const Image& b, Image* grad_a) {
  if (!a.same_shape(b)) throw std::invalid_argument("SSIM inputs must share dimensions");
  if (a.width() < kWindow || a.height() < kWindow)
    throw std::invalid_argument("SSIM inputs smaller than the 11x11 window");

  const Image ga = to_gray(a), gb = to_gray(b);
  const Image mu_a = conv_valid(ga), mu_b = conv_valid(gb);
  const Image s_aa = conv_valid(product(ga, ga));
  const Image s_bb = conv_valid(product(gb, gb));
  const Image s_ab = conv_valid(product(ga, gb));

  const int vw = mu_a.width(), vh = mu_a.height();
  const double inv_count = 1.0 / (static_cast<double>(vw) * vh);

  Image t_mu, t_saa, t_sab;
  if (grad_a) {
    t_mu = Image(vw, vh, 1);
    t_saa = Image(vw, vh, 1);
    t_sab = Image(vw, vh, 1);
  }

  double total = 0.0;
  for (int y = 0; y < vh; ++y)
    for (int x = 0; x < vw; ++x) {
      const double ma = mu_a.at(x, y), mb = mu_b.at(x, y);
      const double va = s_aa.at(x, y) - ma * ma;
      const double vb = s_bb.at(x, y) - mb * mb;
      const double cov = s_ab.at(x, y) - ma * mb;
      const double n1 = 2.0 * ma * mb + kC1, d1 = ma * ma + mb * mb + kC1;
      const double n2 = 2.0 * cov + kC2, d2 = va + vb + kC2;
      const double denom = d1 * d2;
      const double s = (n1 * n2) / denom;
      total += s;
      if (grad_a) {
        t_mu.at(x, y) = (2.0 * mb * (n2 - n1) - s * 2.0 * ma * (d2 - d1)) / denom * inv_count;
        t_saa.at(x, y) = -s / d2 * inv_count;
        t_sab.at(x, y) = 2.0 * n1 / denom * inv_count;
      }
    }

  if (grad_a) {
    const Image g_mu = conv_valid_transpose(t_mu, a.width(), a.height());
    const Image g_saa = conv_valid_transpose(t_saa, a.width(), a.height());
    const Image g_sab = conv_valid_transpose(t_sab, a.width(), a.height());
    *grad_a = Image(a.width(), a.height(), a.channels());
    const double channel_share = 1.0 / a.channels();
    for (int y = 0; y < a.height(); ++y)
      for (int x = 0; x < a.width(); ++x) {
        const double g = g_mu.at(x, y) + 2.0 * ga.at(x, y) * g_saa.at(x, y) +
                         gb.at(x, y) * g_sab.at(x, y);
        for (int c = 0; c < a.channels(); ++c) grad_a->at(x, y, c) = g * channel_share;
      }
  }
  return total * inv_count;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("PSNR inputs must share dimensions");
  double mse = 0.0;
  const double* pa = a.data();
  const double* pb = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = pa[i] - pb[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse <= 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) { return ssim_impl(a, b, nullptr); }

double ssim_with_grad(const Image& a, const Image& b, Image& grad_a) {
  return ssim_impl(a, b, &grad_a);
}

}  // namespace splat
