#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "paintbot/error.hpp"

namespace paintbot {

struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;

  double operator[](int c) const { return c == 0 ? r : (c == 1 ? g : b); }
  bool operator==(const Rgb&) const = default;

  static constexpr Rgb white() { return {1.0, 1.0, 1.0}; }
  static constexpr Rgb black() { return {0.0, 0.0, 0.0}; }
};

// Half-open pixel rectangle [row0, row1) x [col0, col1). Empty when either
// extent is non-positive.
struct PixelRect {
  int row0 = 0;
  int col0 = 0;
  int row1 = 0;
  int col1 = 0;

  bool empty() const { return row1 <= row0 || col1 <= col0; }
};

// H x W x 3 image of intensities in [0,1], stored row-major with interleaved
// channels. Used both for the mutable painting surface and for references.
class Canvas {
 public:
  static constexpr int kChannels = 3;

  Canvas() = default;
  Canvas(int height, int width, Rgb fill = Rgb::white()) : height_(height), width_(width) {
    if (height < 1 || width < 1) {
      throw InvalidArgument("canvas dimensions must be positive, got " + std::to_string(height) +
                            "x" + std::to_string(width));
    }
    pixels_.resize(static_cast<std::size_t>(height) * width * kChannels);
    for (std::size_t i = 0; i < pixels_.size(); i += kChannels) {
      pixels_[i] = fill.r;
      pixels_[i + 1] = fill.g;
      pixels_[i + 2] = fill.b;
    }
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return kChannels; }
  std::size_t size() const { return pixels_.size(); }
  bool empty() const { return pixels_.empty(); }

  bool same_shape(const Canvas& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  std::size_t index(int row, int col, int channel = 0) const {
    return (static_cast<std::size_t>(row) * width_ + col) * kChannels + channel;
  }

  double& at(int row, int col, int channel) { return pixels_[index(row, col, channel)]; }
  const double& at(int row, int col, int channel) const { return pixels_[index(row, col, channel)]; }

  Rgb pixel(int row, int col) const {
    const std::size_t i = index(row, col);
    return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
  }
  void set_pixel(int row, int col, Rgb c) {
    const std::size_t i = index(row, col);
    pixels_[i] = c.r;
    pixels_[i + 1] = c.g;
    pixels_[i + 2] = c.b;
  }

  std::span<double> data() { return pixels_; }
  std::span<const double> data() const { return pixels_; }

  bool operator==(const Canvas&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> pixels_;
};

inline Canvas new_canvas(int height, int width, Rgb fill) {
  for (int c = 0; c < 3; ++c) {
    if (!(fill[c] >= 0.0 && fill[c] <= 1.0)) {
      throw InvalidArgument("fill color must lie in [0,1]");
    }
  }
  return Canvas(height, width, fill);
}

inline void require_same_shape(const Canvas& a, const Canvas& b, const char* what) {
  if (!a.same_shape(b)) {
    throw InvalidArgument(std::string(what) + ": shape mismatch " + std::to_string(a.height()) +
                          "x" + std::to_string(a.width()) + " vs " + std::to_string(b.height()) +
                          "x" + std::to_string(b.width()));
  }
}

inline Canvas crop(const Canvas& src, int row0, int col0, int height, int width) {
  if (row0 < 0 || col0 < 0 || row0 + height > src.height() || col0 + width > src.width()) {
    throw InvalidArgument("crop window exceeds image bounds");
  }
  Canvas out(height, width);
  for (int r = 0; r < height; ++r) {
    const auto first = src.data().begin() + static_cast<std::ptrdiff_t>(src.index(row0 + r, col0));
    std::copy(first, first + static_cast<std::ptrdiff_t>(width) * Canvas::kChannels,
              out.data().begin() + static_cast<std::ptrdiff_t>(out.index(r, 0)));
  }
  return out;
}

// Rotates counter-clockwise by quarter_turns * 90 degrees.
inline Canvas rotate90(const Canvas& src, int quarter_turns) {
  const int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return src;
  const int h = src.height();
  const int w = src.width();
  Canvas out = (k == 2) ? Canvas(h, w) : Canvas(w, h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      int rr = r, cc = c;
      if (k == 1) {
        rr = w - 1 - c;
        cc = r;
      } else if (k == 2) {
        rr = h - 1 - r;
        cc = w - 1 - c;
      } else {
        rr = c;
        cc = h - 1 - r;
      }
      out.set_pixel(rr, cc, src.pixel(r, c));
    }
  }
  return out;
}

inline Canvas flip_horizontal(const Canvas& src) {
  Canvas out(src.height(), src.width());
  for (int r = 0; r < src.height(); ++r) {
    for (int c = 0; c < src.width(); ++c) out.set_pixel(r, src.width() - 1 - c, src.pixel(r, c));
  }
  return out;
}

// Bilinear resampling with pixel-center alignment and edge clamping. A
// same-size resize reproduces the input exactly.
inline Canvas resize_bilinear(const Canvas& src, int height, int width) {
  Canvas out(height, width);
  const double sy = static_cast<double>(src.height()) / height;
  const double sx = static_cast<double>(src.width()) / width;
  for (int r = 0; r < height; ++r) {
    const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, src.height() - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, src.height() - 1);
    const double ty = fy - y0;
    for (int c = 0; c < width; ++c) {
      const double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, src.width() - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, src.width() - 1);
      const double tx = fx - x0;
      for (int ch = 0; ch < Canvas::kChannels; ++ch) {
        const double top = src.at(y0, x0, ch) * (1.0 - tx) + src.at(y0, x1, ch) * tx;
        const double bottom = src.at(y1, x0, ch) * (1.0 - tx) + src.at(y1, x1, ch) * tx;
        out.at(r, c, ch) = std::clamp(top * (1.0 - ty) + bottom * ty, 0.0, 1.0);
      }
    }
  }
  return out;
}

namespace detail {

// Overlap weights of output cells with input cells along one axis, for the
// box (area-average) filter. Each entry is (first input index, weights...).
struct AreaAxis {
  std::vector<int> first;
  std::vector<std::vector<double>> weights;
};

inline AreaAxis area_axis(int in_size, int out_size) {
  AreaAxis axis;
  const double scale = static_cast<double>(in_size) / out_size;
  for (int o = 0; o < out_size; ++o) {
    const double lo = o * scale;
    const double hi = (o + 1) * scale;
    const int i0 = static_cast<int>(std::floor(lo));
    const int i1 = std::min(in_size, static_cast<int>(std::ceil(hi)));
    std::vector<double> w;
    for (int i = i0; i < i1; ++i) {
      w.push_back((std::min<double>(hi, i + 1) - std::max<double>(lo, i)) / scale);
    }
    axis.first.push_back(i0);
    axis.weights.push_back(std::move(w));
  }
  return axis;
}

}  // namespace detail

// Area-average resampling: each output pixel is the mean of the input area it
// covers. Intended for downsampling.
inline Canvas resize_area(const Canvas& src, int height, int width) {
  if (height == src.height() && width == src.width()) return src;
  const auto ay = detail::area_axis(src.height(), height);
  const auto ax = detail::area_axis(src.width(), width);
  Canvas out(height, width);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      std::array<double, 3> acc{};
      for (std::size_t i = 0; i < ay.weights[r].size(); ++i) {
        const int y = ay.first[r] + static_cast<int>(i);
        for (std::size_t j = 0; j < ax.weights[c].size(); ++j) {
          const int x = ax.first[c] + static_cast<int>(j);
          const double w = ay.weights[r][i] * ax.weights[c][j];
          for (int ch = 0; ch < 3; ++ch) acc[ch] += w * src.at(y, x, ch);
        }
      }
      for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = std::clamp(acc[ch], 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace paintbot
