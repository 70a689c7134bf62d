#include "splat/image.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "splat/errors.hpp"

namespace splat {

namespace {

struct PngReadCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReadCloser() { png_destroy_read_struct(&png, &info, nullptr); }
};

struct PngWriteCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriteCloser() { png_destroy_write_struct(&png, &info); }
};

struct FileCloser {
  std::FILE* f = nullptr;
  ~FileCloser() {
    if (f) std::fclose(f);
  }
};

void append_bytes(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<unsigned char>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

}  // namespace

Image read_png(const std::filesystem::path& path) {
  FileCloser file{std::fopen(path.string().c_str(), "rb")};
  if (!file.f) throw LoadError("cannot open PNG file: " + path.string());

  PngReadCloser ctx;
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!ctx.png) throw LoadError("png_create_read_struct failed");
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.info) throw LoadError("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(ctx.png))) throw LoadError("failed to decode PNG: " + path.string());

  png_init_io(ctx.png, file.f);
  png_read_info(ctx.png, ctx.info);

  png_uint_32 width = png_get_image_width(ctx.png, ctx.info);
  png_uint_32 height = png_get_image_height(ctx.png, ctx.info);
  int bit_depth = png_get_bit_depth(ctx.png, ctx.info);
  int color_type = png_get_color_type(ctx.png, ctx.info);

  if (bit_depth == 16) png_set_strip_16(ctx.png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ctx.png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(ctx.png);
  if (png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(ctx.png);
  png_set_strip_alpha(ctx.png);
  png_read_update_info(ctx.png, ctx.info);

  int channels = png_get_channels(ctx.png, ctx.info);
  if (channels != 1 && channels != 3)
    throw LoadError("unsupported PNG channel count " + std::to_string(channels) + ": " +
                    path.string());

  std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height * channels);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 y = 0; y < height; ++y)
    rows[y] = raw.data() + static_cast<std::size_t>(y) * width * channels;
  png_read_image(ctx.png, rows.data());

  Image img(static_cast<int>(width), static_cast<int>(height), channels);
  for (std::size_t i = 0; i < raw.size(); ++i) img.data()[i] = raw[i] / 255.0;
  return img;
}

std::vector<unsigned char> encode_png(const Image& img) {
  if (img.channels() != 1 && img.channels() != 3)
    throw std::invalid_argument("PNG encoding supports 1 or 3 channels");

  std::vector<unsigned char> out;
  PngWriteCloser ctx;
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!ctx.png) throw std::runtime_error("png_create_write_struct failed");
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.info) throw std::runtime_error("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(ctx.png))) throw std::runtime_error("failed to encode PNG");

  png_set_write_fn(ctx.png, &out, append_bytes, nullptr);
  png_set_IHDR(ctx.png, ctx.info, img.width(), img.height(), 8,
               img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);

  std::vector<unsigned char> row(static_cast<std::size_t>(img.width()) * img.channels());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c)
        row[static_cast<std::size_t>(x) * img.channels() + c] = quantize8(img.at(x, y, c));
    png_write_row(ctx.png, row.data());
  }
  png_write_end(ctx.png, nullptr);
  return out;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  std::vector<unsigned char> bytes = encode_png(img);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("short write: " + path.string());
}

// PFM: "Pf\n<w> <h>\n<scale>\n" then w*h float32 rows, bottom row first.
// Negative scale marks little-endian data, which is all we emit or accept.
Image read_pfm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError("cannot open PFM file: " + path.string());

  std::string magic;
  int width = 0, height = 0;
  double scale = 0.0;
  f >> magic >> width >> height >> scale;
  if (!f || magic != "Pf" || width <= 0 || height <= 0)
    throw LoadError("malformed PFM header: " + path.string());
  if (scale >= 0) throw LoadError("big-endian PFM not supported: " + path.string());
  f.get();  // single whitespace byte after the scale

  std::vector<float> raw(static_cast<std::size_t>(width) * height);
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
  if (!f) throw LoadError("truncated PFM payload: " + path.string());

  Image img(width, height, 1);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      img.at(x, y, 0) = raw[static_cast<std::size_t>(height - 1 - y) * width + x];
  return img;
}

void write_pfm(const std::filesystem::path& path, const Image& img) {
  if (img.channels() != 1) throw std::invalid_argument("PFM writer expects one channel");
  static_assert(std::endian::native == std::endian::little, "PFM writer assumes little-endian");

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f << "Pf\n" << img.width() << " " << img.height() << "\n-1.0\n";

  std::vector<float> row(static_cast<std::size_t>(img.width()));
  for (int y = img.height() - 1; y >= 0; --y) {
    for (int x = 0; x < img.width(); ++x) row[x] = static_cast<float>(img.at(x, y, 0));
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * 4));
  }
  if (!f) throw std::runtime_error("short write: " + path.string());
}

}  // namespace splat
