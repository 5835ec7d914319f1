#pragma once

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "caseforge/core/serialize.hpp"
#include "caseforge/core/tensor.hpp"

namespace caseforge {

// 8-bit RGB PNG encode/decode for HxWx3 float images in [0, 1].

inline std::vector<uint8_t> encode_png(const Tensor<float>& img) {
  const auto& s = img.shape();
  require(s.size() == 3 && s[2] == 3, Errc::shape_mismatch,
          "encode_png: expected (H, W, 3), got " + shape_str(s));
  const int64_t h = s[0], w = s[1];

  std::vector<uint8_t> rows(static_cast<size_t>(h * w * 3));
  for (int64_t i = 0; i < h * w * 3; ++i) {
    float v = img[i];
    v = std::min(1.0f, std::max(0.0f, v));
    rows[static_cast<size_t>(i)] = static_cast<uint8_t>(std::lround(v * 255.0f));
  }

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, Errc::io_error, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error(Errc::io_error, "png_create_info_struct failed");
  }

  std::vector<uint8_t> out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(Errc::io_error, "png encode failed");
  }
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep data, png_size_t len) {
        auto* buf = static_cast<std::vector<uint8_t>*>(png_get_io_ptr(p));
        buf->insert(buf->end(), data, data + len);
      },
      nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int64_t y = 0; y < h; ++y)
    png_write_row(png, const_cast<png_bytep>(rows.data() + y * w * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

inline void write_png(const std::filesystem::path& path, const Tensor<float>& img) {
  auto bytes = encode_png(img);
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), Errc::io_error, "cannot open for write: " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(os), Errc::io_error, "write failed: " + path.string());
}

inline Tensor<float> decode_png(const std::vector<uint8_t>& bytes) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, Errc::io_error, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error(Errc::io_error, "png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(Errc::io_error, "png decode failed");
  }
  struct Cursor {
    const uint8_t* data;
    size_t size;
    size_t pos;
  } cursor{bytes.data(), bytes.size(), 0};
  png_set_read_fn(png, &cursor, [](png_structp p, png_bytep dst, png_size_t len) {
    auto* c = static_cast<Cursor*>(png_get_io_ptr(p));
    if (c->pos + len > c->size) png_error(p, "truncated png");
    std::memcpy(dst, c->data + c->pos, len);
    c->pos += len;
  });
  png_read_info(png, info);
  const auto w = png_get_image_width(png, info);
  const auto h = png_get_image_height(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  require(png_get_channels(png, info) == 3, Errc::io_error, "png: expected 3 channels");

  std::vector<uint8_t> rows(static_cast<size_t>(h) * w * 3);
  for (png_uint_32 y = 0; y < h; ++y) png_read_row(png, rows.data() + y * w * 3, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor<float> img({static_cast<int64_t>(h), static_cast<int64_t>(w), 3});
  for (int64_t i = 0; i < img.numel(); ++i)
    img[i] = static_cast<float>(rows[static_cast<size_t>(i)]) / 255.0f;
  return img;
}

inline Tensor<float> read_png(const std::filesystem::path& path) {
  return decode_png(read_file_bytes(path));
}

}  // namespace caseforge
