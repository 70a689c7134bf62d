#pragma once

#include <cassert>
#include <filesystem>
#include <vector>

namespace splat {

/// Dense row-major, channel-interleaved image with double samples.
/// Pixel values are nominally in [0,1] for color, scene units for depth.
class Image {
public:
  Image() = default;
  Image(int width, int height, int channels, double fill = 0.0)
      : width_(width), height_(height), channels_(channels),
        data_(static_cast<std::size_t>(width) * height * channels, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }

  double& at(int x, int y, int c = 0) {
    assert(x >= 0 && x < width_ && y >= 0 && y < height_ && c >= 0 && c < channels_);
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  double at(int x, int y, int c = 0) const {
    assert(x >= 0 && x < width_ && y >= 0 && y < height_ && c >= 0 && c < channels_);
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool same_shape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }

private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Quantization used when storing images as 8-bit PNG.
inline unsigned char quantize8(double v) {
  double s = v * 255.0 + 0.5;
  if (s < 0.0) s = 0.0;
  if (s > 255.0) s = 255.0;
  return static_cast<unsigned char>(s);
}

/// 8-bit PNG I/O. Grayscale maps to 1 channel, RGB to 3; values scaled to [0,1].
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);

/// Encode to in-memory PNG bytes (same encoder as write_png).
std::vector<unsigned char> encode_png(const Image& img);

/// Grayscale PFM (float32, little-endian, bottom-up rows).
Image read_pfm(const std::filesystem::path& path);
void write_pfm(const std::filesystem::path& path, const Image& img);

}  // namespace splat
