#pragma once

#include "splat/image.hpp"

namespace splat {

/// Peak signal-to-noise ratio for unit-range images, capped at 100 dB so
/// identical inputs stay finite.
double psnr(const Image& a, const Image& b);

/// Mean local structural similarity: 11x11 Gaussian window (sigma 1.5),
/// C1 = 0.01^2, C2 = 0.03^2, windows fully inside the image. RGB inputs
/// are reduced to grayscale by channel mean first.
double ssim(const Image& a, const Image& b);

/// ssim() value plus its gradient w.r.t. every sample of `a`. The gradient
/// image has the shape of `a` (channel gradients split evenly for RGB).
double ssim_with_grad(const Image& a, const Image& b, Image& grad_a);

}  // namespace splat
