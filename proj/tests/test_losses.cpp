#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "paintbot/losses.hpp"

using namespace paintbot;

namespace {

Canvas random_canvas(int h, int w, std::mt19937_64& rng) {
  Canvas c(h, w);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : c.data()) v = u(rng);
  return c;
}

// Scalar oracles over (row, col, channel) triples.
double oracle_l2(const Canvas& a, const Canvas& b) {
  double s = 0;
  for (int r = 0; r < a.height(); ++r)
    for (int c = 0; c < a.width(); ++c)
      for (int ch = 0; ch < 3; ++ch) s += std::pow(a.at(r, c, ch) - b.at(r, c, ch), 2);
  return s / (a.height() * a.width() * 3);
}

double oracle_lhalf(const Canvas& a, const Canvas& b) {
  double s = 0;
  for (int r = 0; r < a.height(); ++r)
    for (int c = 0; c < a.width(); ++c)
      for (int ch = 0; ch < 3; ++ch) s += std::pow(std::abs(a.at(r, c, ch) - b.at(r, c, ch)), 0.5);
  return s / (a.height() * a.width() * 3);
}

// Direct nested-loop convolution stack: [layer][channel][row][col].
using Maps = std::vector<std::vector<std::vector<std::vector<double>>>>;
Maps oracle_features(const FeatureStack& phi, const Canvas& img) {
  std::vector<std::vector<std::vector<double>>> cur(3, std::vector<std::vector<double>>(img.height(), std::vector<double>(img.width())));
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < img.height(); ++r)
      for (int c = 0; c < img.width(); ++c) cur[ch][r][c] = img.at(r, c, ch);
  Maps out;
  for (std::size_t l = 0; l < phi.layers().size(); ++l) {
    const auto& spec = phi.layers()[l];
    const int in_c = static_cast<int>(cur.size()), in_h = static_cast<int>(cur[0].size()),
              in_w = static_cast<int>(cur[0][0].size());
    const int oh = (in_h - spec.kernel_h) / spec.stride + 1, ow = (in_w - spec.kernel_w) / spec.stride + 1;
    std::vector<std::vector<std::vector<double>>> next(spec.out_channels, std::vector<std::vector<double>>(oh, std::vector<double>(ow)));
    const auto& w = phi.weights(l);
    for (int o = 0; o < spec.out_channels; ++o)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          double acc = phi.biases(l)[o];
          for (int i = 0; i < in_c; ++i)
            for (int ky = 0; ky < spec.kernel_h; ++ky)
              for (int kx = 0; kx < spec.kernel_w; ++kx)
                acc += w[((o * in_c + i) * spec.kernel_h + ky) * spec.kernel_w + kx] *
                       cur[i][y * spec.stride + ky][x * spec.stride + kx];
          next[o][y][x] = std::max(acc, 0.0);
        }
    out.push_back(next);
    cur = next;
  }
  return out;
}

double oracle_perceptual(const FeatureStack& phi, const Canvas& a, const Canvas& b) {
  const Maps fa = oracle_features(phi, a), fb = oracle_features(phi, b);
  double total = 0;
  for (std::size_t l = 0; l < fa.size(); ++l) {
    double s = 0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < fa[l].size(); ++c)
      for (std::size_t r = 0; r < fa[l][c].size(); ++r)
        for (std::size_t x = 0; x < fa[l][c][r].size(); ++x, ++n) s += std::pow(fa[l][c][r][x] - fb[l][c][r][x], 2);
    total += s / static_cast<double>(n);
  }
  return total;
}

}  // namespace

TEST(LossL2, Examples) {
  std::mt19937_64 rng(1);
  const Canvas a = random_canvas(3, 4, rng);
  EXPECT_EQ(loss_l2(a, a), 0.0);
  EXPECT_EQ(loss_l2(Canvas(2, 2, Rgb::black()), Canvas(2, 2, Rgb::white())), 1.0);
  EXPECT_EQ(loss_l2(Canvas(1, 1, {0.5, 0.5, 0.5}), Canvas(1, 1, Rgb::black())), 0.25);
}

TEST(LossLHalf, Examples) {
  std::mt19937_64 rng(2);
  const Canvas a = random_canvas(3, 4, rng);
  EXPECT_EQ(loss_lhalf(a, a), 0.0);
  EXPECT_EQ(loss_lhalf(Canvas(1, 1, {0.25, 0.25, 0.25}), Canvas(1, 1, {0.5, 0.5, 0.5})), 0.5);
  EXPECT_EQ(loss_lhalf(Canvas(2, 3, Rgb::black()), Canvas(2, 3, Rgb::white())), 1.0);
}

TEST(LossPerceptual, IdentityReducesToMeanSquare) {
  std::mt19937_64 rng(3);
  const FeatureStack id = FeatureStack::identity();
  for (int i = 0; i < 20; ++i) {
    const Canvas a = random_canvas(4, 4, rng), b = random_canvas(4, 4, rng);
    EXPECT_NEAR(loss_perceptual(a, b, id), oracle_l2(a, b), 1e-12);
    EXPECT_EQ(loss_perceptual(a, a, id), 0.0);
  }
}

TEST(LossPerceptual, SeededStackMatchesDirectConvolution) {
  std::mt19937_64 rng(4);
  const FeatureStack phi = FeatureStack::seeded(17);
  for (int i = 0; i < 5; ++i) {
    const Canvas a = random_canvas(19, 23, rng), b = random_canvas(19, 23, rng);
    const double v = loss_perceptual(a, b, phi);
    EXPECT_NEAR(v, oracle_perceptual(phi, a, b), 1e-12 * std::max(1.0, v));
    EXPECT_GE(v, 0.0);
  }
  EXPECT_THROW(loss_perceptual(Canvas(4, 4), Canvas(4, 4), phi), InvalidArgument);
}

TEST(Losses, OraclesOnRandomPairs) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const Canvas a = random_canvas(4, 4, rng), b = random_canvas(4, 4, rng);
    EXPECT_NEAR(loss_l2(a, b), oracle_l2(a, b), 1e-12);
    EXPECT_NEAR(loss_lhalf(a, b), oracle_lhalf(a, b), 1e-12);
  }
}

TEST(Losses, SymmetricNonNegativeZeroIffEqual) {
  std::mt19937_64 rng(6);
  const FeatureStack phi = FeatureStack::seeded(2);
  for (int i = 0; i < 20; ++i) {
    const Canvas a = random_canvas(16, 16, rng), b = random_canvas(16, 16, rng);
    EXPECT_EQ(loss_l2(a, b), loss_l2(b, a));
    EXPECT_EQ(loss_lhalf(a, b), loss_lhalf(b, a));
    EXPECT_NEAR(loss_perceptual(a, b, phi), loss_perceptual(b, a, phi), 1e-15);
    EXPECT_GT(loss_l2(a, b), 0.0);
    EXPECT_GT(loss_lhalf(a, b), 0.0);
    EXPECT_GE(loss_perceptual(a, b, phi), 0.0);
    EXPECT_EQ(loss_perceptual(a, a, phi), 0.0);
    Canvas c = a;
    c.at(3, 5, 1) = std::nextafter(c.at(3, 5, 1), 2.0);
    EXPECT_GT(loss_l2(a, c), 0.0);
    EXPECT_GT(loss_lhalf(a, c), 0.0);
  }
}

TEST(Losses, ShapeMismatchRejected) {
  EXPECT_THROW(loss_l2(Canvas(2, 3), Canvas(3, 2)), InvalidArgument);
  EXPECT_THROW(loss_lhalf(Canvas(2, 3), Canvas(2, 4)), InvalidArgument);
}

TEST(Losses, ParseNames) {
  EXPECT_EQ(parse_loss_type("l2"), LossType::L2);
  EXPECT_EQ(parse_loss_type("lhalf"), LossType::LHalf);
  EXPECT_EQ(parse_loss_type("perceptual"), LossType::Perceptual);
  EXPECT_THROW(parse_loss_type("ssim"), InvalidArgument);
}

TEST(GaussianBlur, ConstantAndZeroSigma) {
  const Canvas c(9, 7, {0.3, 0.5, 0.8});
  const Canvas b = gaussian_blur(c, 1.7);
  for (int i = 0; i < static_cast<int>(c.size()); ++i) EXPECT_NEAR(b.data()[i], c.data()[i], 1e-15);
  std::mt19937_64 rng(7);
  const Canvas r = random_canvas(5, 5, rng);
  EXPECT_EQ(gaussian_blur(r, 0.0), r);
  EXPECT_THROW(gaussian_blur(r, -1.0), InvalidArgument);
}

TEST(GaussianBlur, ImpulseGivesKernel) {
  const double sigma = 1.3;
  Canvas img(31, 31, Rgb::black());
  img.set_pixel(15, 15, Rgb::white());
  const Canvas b = gaussian_blur(img, sigma);
  // dense 2-D oracle: unnormalised 2-D Gaussian over the (2R+1)^2 window
  const int radius = static_cast<int>(std::ceil(3 * sigma));
  double z = 0;
  for (int i = -radius; i <= radius; ++i) z += std::exp(-i * i / (2 * sigma * sigma));
  for (int dy = -radius - 1; dy <= radius + 1; ++dy)
    for (int dx = -radius - 1; dx <= radius + 1; ++dx) {
      const bool inside = std::abs(dy) <= radius && std::abs(dx) <= radius;
      const double want = inside ? std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)) / (z * z) : 0.0;
      EXPECT_NEAR(b.at(15 + dy, 15 + dx, 0), want, 1e-15);
    }
}

TEST(GaussianBlur, ReflectPadding) {
  EXPECT_EQ(reflect_index(-1, 5), 1);
  EXPECT_EQ(reflect_index(-2, 5), 2);
  EXPECT_EQ(reflect_index(5, 5), 3);
  EXPECT_EQ(reflect_index(6, 5), 2);
  EXPECT_EQ(reflect_index(3, 1), 0);
}

TEST(GaussianBlur, BringsImagesCloser) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 10; ++i) {
    const Canvas a = random_canvas(24, 24, rng), b = random_canvas(24, 24, rng);
    EXPECT_LT(loss_l2(gaussian_blur(a, 1.5), gaussian_blur(b, 1.5)), loss_l2(a, b));
  }
}

TEST(NormalizedReward, Examples) {
  EXPECT_EQ(normalized_reward(10, 0, 10), 1.0);
  EXPECT_EQ(normalized_reward(4, 4, 10), 0.0);
  EXPECT_DOUBLE_EQ(normalized_reward(4, 6, 10), -0.2);
  EXPECT_THROW(normalized_reward(1, 1, 0), InvalidArgument);
}

TEST(NormalizedReward, TelescopingOnRandomSequences) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int e = 0; e < 50; ++e) {
    std::vector<double> losses{u(rng) + 0.1};
    for (int t = 0; t < 20; ++t) losses.push_back(u(rng));
    double sum = 0;
    for (int t = 1; t <= 20; ++t) sum += normalized_reward(losses[t - 1], losses[t], losses[0]);
    EXPECT_NEAR(sum, (losses[0] - losses[20]) / losses[0], 1e-12);
    EXPECT_LE(sum, 1.0);
  }
}
