#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "paintbot/canvas.hpp"
#include "paintbot/error.hpp"

namespace paintbot {

// 8-bit quantization used by every on-disk format: round half up, clamped.
inline std::uint8_t to_byte(double v) {
  const double scaled = std::floor(v * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

inline double from_byte(std::uint8_t b) { return static_cast<double>(b) / 255.0; }

// Loads an 8-bit PNG as RGB intensities. Gray and palette images are expanded
// to RGB; images with an alpha channel are rejected.
inline Canvas load_png(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("cannot read PNG " + path + ": " + msg);
  }
  if (image.format & PNG_FORMAT_FLAG_ALPHA) {
    png_image_free(&image);
    throw FormatError("PNG has an alpha channel, only RGB is supported: " + path);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("cannot decode PNG " + path + ": " + msg);
  }
  Canvas canvas(static_cast<int>(image.height), static_cast<int>(image.width));
  auto px = canvas.data();
  for (std::size_t i = 0; i < buffer.size(); ++i) px[i] = from_byte(buffer[i]);
  return canvas;
}

inline std::vector<std::uint8_t> to_rgb_bytes(const Canvas& canvas) {
  std::vector<std::uint8_t> bytes(canvas.size());
  auto px = canvas.data();
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(px[i]);
  return bytes;
}

inline void save_png(const Canvas& canvas, const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(canvas.width());
  image.height = static_cast<png_uint_32>(canvas.height());
  image.format = PNG_FORMAT_RGB;
  const auto bytes = to_rgb_bytes(canvas);
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot write PNG (" + msg + ")", path);
  }
}

}  // namespace paintbot
