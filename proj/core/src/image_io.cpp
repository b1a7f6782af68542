// Copyright 2026 The OSDG Authors.
// SPDX-License-Identifier: Apache-2.0

#include "osdg/image_io.hpp"

#include <png.h>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "osdg/error.hpp"

namespace osdg::io {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw DataError("cannot open image file " + path.string());
  return f;
}

// 8-bit interleaved pixels plus geometry.
struct Raster {
  int width = 0, height = 0, channels = 0;
  std::vector<unsigned char> pixels;
};

Raster read_png_raster(const std::filesystem::path& path) {
  auto f = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng initialisation failed for " + path.string());
  }
  Raster r;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("corrupt PNG file " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_packing(png);
  png_set_strip_alpha(png);
  const auto color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  r.width = static_cast<int>(png_get_image_width(png, info));
  r.height = static_cast<int>(png_get_image_height(png, info));
  r.channels = png_get_channels(png, info);
  r.pixels.resize(static_cast<std::size_t>(r.width) * r.height * r.channels);
  rows.resize(static_cast<std::size_t>(r.height));
  for (int y = 0; y < r.height; ++y)
    rows[static_cast<std::size_t>(y)] = r.pixels.data() + static_cast<std::size_t>(y) * r.width * r.channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return r;
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};

Raster read_jpeg_raster(const std::filesystem::path& path) {
  auto f = open_file(path, "rb");
  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = [](j_common_ptr c) { std::longjmp(reinterpret_cast<JpegError*>(c->err)->jump, 1); };
  Raster r;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw DataError("corrupt JPEG file " + path.string());
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  r.width = static_cast<int>(cinfo.output_width);
  r.height = static_cast<int>(cinfo.output_height);
  r.channels = cinfo.output_components;
  r.pixels.resize(static_cast<std::size_t>(r.width) * r.height * r.channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    unsigned char* row = r.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * r.width * r.channels;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return r;
}

Raster read_raster(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return read_png_raster(path);
  if (ext == ".jpg" || ext == ".jpeg") return read_jpeg_raster(path);
  throw DataError("unsupported image format: " + path.string());
}

void write_png_raster(const std::filesystem::path& path, const Raster& r) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng initialisation failed for " + path.string());
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("failed writing PNG " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(r.width), static_cast<png_uint_32>(r.height), 8,
               r.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < r.height; ++y)
    png_write_row(png, const_cast<png_bytep>(r.pixels.data() + static_cast<std::size_t>(y) * r.width * r.channels));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

unsigned char to_byte(float v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  const Raster r = read_raster(path);
  Image img({3, r.height, r.width});
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const int src_c = r.channels >= 3 ? c : 0;
        img.at(c, y, x) =
            r.pixels[(static_cast<std::size_t>(y) * r.width + x) * r.channels + src_c] / 255.0f;
      }
  return img;
}

Mask read_mask(const std::filesystem::path& path) {
  const Raster r = read_raster(path);
  Mask m({r.height, r.width});
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x)
      m.at(y, x) = r.pixels[(static_cast<std::size_t>(y) * r.width + x) * r.channels] ? 1.0f : 0.0f;
  return m;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.rank() != 3 || (image.dim(0) != 3 && image.dim(0) != 1))
    throw ShapeError("write_png: expected 3 x H x W or 1 x H x W, got " + shape_str(image.shape()));
  Raster r{image.dim(2), image.dim(1), image.dim(0), {}};
  r.pixels.resize(image.size());
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x)
      for (int c = 0; c < r.channels; ++c)
        r.pixels[(static_cast<std::size_t>(y) * r.width + x) * r.channels + c] = to_byte(image.at(c, y, x));
  write_png_raster(path, r);
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
  if (mask.rank() != 2) throw ShapeError("write_mask_png: expected H x W");
  Raster r{mask.dim(1), mask.dim(0), 1, {}};
  r.pixels.resize(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) r.pixels[i] = mask[i] > 0.5f ? 255 : 0;
  write_png_raster(path, r);
}

Image resize_bilinear(const Image& image, int height, int width) {
  const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
  if (H == height && W == width) return image;
  Image out({C, height, width});
  const float sy = static_cast<float>(H) / height, sx = static_cast<float>(W) / width;
  for (int y = 0; y < height; ++y) {
    const float fy = std::max(0.0f, (y + 0.5f) * sy - 0.5f);
    const int y0 = std::min(static_cast<int>(fy), H - 1), y1 = std::min(y0 + 1, H - 1);
    const float wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const float fx = std::max(0.0f, (x + 0.5f) * sx - 0.5f);
      const int x0 = std::min(static_cast<int>(fx), W - 1), x1 = std::min(x0 + 1, W - 1);
      const float wx = fx - x0;
      for (int c = 0; c < C; ++c)
        out.at(c, y, x) = (1 - wy) * ((1 - wx) * image.at(c, y0, x0) + wx * image.at(c, y0, x1)) +
                          wy * ((1 - wx) * image.at(c, y1, x0) + wx * image.at(c, y1, x1));
    }
  }
  return out;
}

}  // namespace osdg::io
