#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "paintbot/canvas.hpp"
#include "paintbot/image_io.hpp"

using namespace paintbot;

namespace {

Canvas random_canvas(int h, int w, std::mt19937_64& rng) {
  Canvas c(h, w);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : c.data()) v = u(rng);
  return c;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("paintbot_canvas_" + name)).string();
}

}  // namespace

TEST(Canvas, WhiteFill) {
  const Canvas c = new_canvas(2, 2, Rgb::white());
  EXPECT_EQ(c.height(), 2);
  EXPECT_EQ(c.width(), 2);
  for (double v : c.data()) EXPECT_EQ(v, 1.0);
}

TEST(Canvas, SingleGrayPixel) {
  const Canvas c = new_canvas(1, 1, {0.5, 0.5, 0.5});
  EXPECT_EQ(c.pixel(0, 0), (Rgb{0.5, 0.5, 0.5}));
}

TEST(Canvas, ZeroDimensionRejected) {
  EXPECT_THROW(new_canvas(0, 4, Rgb::white()), InvalidArgument);
  EXPECT_THROW(new_canvas(4, 0, Rgb::white()), InvalidArgument);
  EXPECT_THROW(new_canvas(2, 2, {1.5, 0, 0}), InvalidArgument);
}

TEST(Canvas, HwcLayout) {
  Canvas c(2, 3);
  c.set_pixel(1, 2, {0.1, 0.2, 0.3});
  EXPECT_EQ(c.index(1, 2, 1), (1u * 3 + 2) * 3 + 1);
  EXPECT_EQ(c.data()[c.index(1, 2, 2)], 0.3);
}

TEST(Canvas, CropRotateFlip) {
  std::mt19937_64 rng(1);
  const Canvas src = random_canvas(5, 7, rng);
  const Canvas c = crop(src, 1, 2, 3, 4);
  EXPECT_EQ(c.pixel(2, 3), src.pixel(3, 5));
  EXPECT_THROW(crop(src, 3, 0, 3, 4), InvalidArgument);

  EXPECT_EQ(rotate90(rotate90(rotate90(rotate90(src, 1), 1), 1), 1), src);
  EXPECT_EQ(rotate90(src, 2), rotate90(rotate90(src, 1), 1));
  EXPECT_EQ(flip_horizontal(flip_horizontal(src)), src);
  const Canvas r = rotate90(src, 1);
  EXPECT_EQ(r.height(), 7);
  EXPECT_EQ(r.width(), 5);
  // counter-clockwise: the top-right pixel ends up top-left
  EXPECT_EQ(r.pixel(0, 0), src.pixel(0, 6));
}

TEST(Canvas, ResizeSameSizeIsExact) {
  std::mt19937_64 rng(2);
  const Canvas src = random_canvas(6, 9, rng);
  EXPECT_EQ(resize_bilinear(src, 6, 9), src);
  EXPECT_EQ(resize_area(src, 6, 9), src);
}

TEST(Canvas, AreaDownsamplePreservesMean) {
  std::mt19937_64 rng(3);
  const Canvas src = random_canvas(12, 18, rng);
  for (auto [h, w] : {std::pair{6, 9}, std::pair{5, 7}, std::pair{1, 1}}) {
    const Canvas d = resize_area(src, h, w);
    for (int ch = 0; ch < 3; ++ch) {
      double a = 0.0, b = 0.0;
      for (int r = 0; r < src.height(); ++r)
        for (int c = 0; c < src.width(); ++c) a += src.at(r, c, ch);
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) b += d.at(r, c, ch);
      EXPECT_NEAR(a / (12 * 18), b / (h * w), 1e-12);
    }
  }
  // 2x2 box average
  const Canvas d = resize_area(src, 6, 9);
  EXPECT_NEAR(d.at(1, 1, 0), (src.at(2, 2, 0) + src.at(2, 3, 0) + src.at(3, 2, 0) + src.at(3, 3, 0)) / 4, 1e-12);
}

TEST(Canvas, ResizeKeepsConstantImages) {
  const Canvas c(7, 5, {0.2, 0.4, 0.6});
  EXPECT_EQ(resize_bilinear(c, 13, 11).pixel(6, 3).g, 0.4);
  EXPECT_NEAR(resize_area(c, 3, 2).pixel(1, 1).b, 0.6, 1e-15);
}

TEST(ImageIo, ByteRoundTrip) {
  for (int b = 0; b < 256; ++b) EXPECT_EQ(to_byte(from_byte(static_cast<std::uint8_t>(b))), b);
  EXPECT_EQ(to_byte(-0.3), 0);
  EXPECT_EQ(to_byte(1.7), 255);
}

TEST(ImageIo, PngRoundTrip) {
  std::mt19937_64 rng(4);
  Canvas c(9, 13);
  std::uniform_int_distribution<int> byte(0, 255);
  for (auto& v : c.data()) v = from_byte(static_cast<std::uint8_t>(byte(rng)));
  const std::string path = temp_path("rt.png");
  save_png(c, path);
  EXPECT_EQ(load_png(path), c);
  std::filesystem::remove(path);
}

TEST(ImageIo, MissingAndCorruptFiles) {
  EXPECT_THROW(load_png(temp_path("does_not_exist.png")), std::runtime_error);
  const std::string path = temp_path("garbage.png");
  std::ofstream(path) << "not a png";
  EXPECT_THROW(load_png(path), std::runtime_error);
  std::filesystem::remove(path);
}
