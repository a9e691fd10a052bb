#pragma once

#include <png.h>

#include <cstdio>
#include <cstdint>
#include <string>
#include <vector>

#include "aunet/errors.hpp"
#include "aunet/tensor.hpp"

namespace aunet {

struct Rgb8Image {
  int width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB
};

inline void write_png_rgb8(const std::string& path, const Rgb8Image& img) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw DataError("png: cannot open '" + path + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw DataError("png: write failed for '" + path + "'");
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = const_cast<png_bytep>(img.pixels.data() + std::size_t(y) * img.width * 3);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline Rgb8Image read_png_rgb8(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw DataError("png: cannot open '" + path + "'");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    std::fclose(fp);
    throw DataError("png: read failed for '" + path + "'");
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  Rgb8Image img;
  img.width = int(png_get_image_width(png, info));
  img.height = int(png_get_image_height(png, info));
  img.pixels.resize(std::size_t(img.width) * img.height * 3);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = img.pixels.data() + std::size_t(y) * img.width * 3;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

// [0,1] float image (1,3,H,W) <-> 8-bit RGB
template <class T>
Rgb8Image tensor_to_rgb8(const Tensor<T>& t) {
  Rgb8Image img;
  img.width = t.w;
  img.height = t.h;
  img.pixels.resize(std::size_t(t.h) * t.w * 3);
  for (int y = 0; y < t.h; ++y)
    for (int x = 0; x < t.w; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = double(t.at(0, c, y, x));
        v = v < 0 ? 0 : (v > 1 ? 1 : v);
        img.pixels[(std::size_t(y) * t.w + x) * 3 + c] =
            std::uint8_t(std::lround(v * 255.0));
      }
  return img;
}

template <class T>
Tensor<T> rgb8_to_tensor(const Rgb8Image& img) {
  Tensor<T> t(1, 3, img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        t.at(0, c, y, x) =
            T(img.pixels[(std::size_t(y) * img.width + x) * 3 + c] / 255.0);
  return t;
}

}  // namespace aunet
