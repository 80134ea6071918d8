#include "offnadir/datagen/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

namespace offnadir::datagen {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

void write_png_bytes(const std::string& path, const std::vector<png_byte>& pixels,
                     int width, int height, int color_type, int channels) {
  FilePtr fp(fopen(path.c_str(), "wb"));
  ON_CHECK(fp != nullptr, "cannot open '%s' for writing", path.c_str());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                            nullptr);
  ON_CHECK(png, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(strfmt("libpng error while writing '%s'", path.c_str()));
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y)
    rows[y] = const_cast<png_bytep>(pixels.data() + size_t(y) * width * channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png_rgb8(const std::string& path, const nn::TensorF& image) {
  ON_CHECK(image.n() == 1 && image.c() == 3, "write_png_rgb8 expects (1,3,H,W)");
  const int h = image.h(), w = image.w();
  std::vector<png_byte> pixels(size_t(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        float v = image.at(0, c, y, x);
        v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
        pixels[(size_t(y) * w + x) * 3 + c] = png_byte(v * 255.f + 0.5f);
      }
  write_png_bytes(path, pixels, w, h, PNG_COLOR_TYPE_RGB, 3);
}

void write_png_mask8(const std::string& path, const nn::TensorF& mask) {
  ON_CHECK(mask.n() == 1 && mask.c() == 1, "write_png_mask8 expects (1,1,H,W)");
  const int h = mask.h(), w = mask.w();
  std::vector<png_byte> pixels(size_t(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const float v = mask.at(0, 0, y, x);
      ON_CHECK(v == 0.f || v == 1.f, "mask must be binary");
      pixels[size_t(y) * w + x] = v == 1.f ? 255 : 0;
    }
  write_png_bytes(path, pixels, w, h, PNG_COLOR_TYPE_GRAY, 1);
}

namespace {

std::vector<png_byte> read_png_rgba(const std::string& path, int& width, int& height) {
  FilePtr fp(fopen(path.c_str(), "rb"));
  ON_CHECK(fp != nullptr, "cannot open raster '%s'", path.c_str());
  png_byte header[8];
  ON_CHECK(fread(header, 1, 8, fp.get()) == 8 && !png_sig_cmp(header, 0, 8),
           "'%s' is not a PNG raster", path.c_str());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                           nullptr);
  ON_CHECK(png, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(strfmt("unreadable raster '%s'", path.c_str()));
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  width = int(png_get_image_width(png, info));
  height = int(png_get_image_height(png, info));
  // Normalize everything to 8-bit RGBA.
  png_set_expand(png);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_filler(png, 0xFF, PNG_FILLER_AFTER);
  png_read_update_info(png, info);
  std::vector<png_byte> pixels(size_t(height) * width * 4);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = pixels.data() + size_t(y) * width * 4;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return pixels;
}

}  // namespace

nn::TensorF read_png_rgb(const std::string& path) {
  int w = 0, h = 0;
  auto pixels = read_png_rgba(path, w, h);
  nn::TensorF out(1, 3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(0, c, y, x) = float(pixels[(size_t(y) * w + x) * 4 + c]) / 255.f;
  return out;
}

nn::TensorF read_png_mask(const std::string& path) {
  int w = 0, h = 0;
  auto pixels = read_png_rgba(path, w, h);
  nn::TensorF out(1, 1, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out.at(0, 0, y, x) = pixels[(size_t(y) * w + x) * 4] >= 128 ? 1.f : 0.f;
  return out;
}

}  // namespace offnadir::datagen
