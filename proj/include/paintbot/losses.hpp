#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "paintbot/canvas.hpp"
#include "paintbot/error.hpp"
#include "paintbot/nn.hpp"

namespace paintbot {

enum class LossType { L2, LHalf, Perceptual };

inline std::string to_string(LossType t) {
  switch (t) {
    case LossType::L2: return "l2";
    case LossType::LHalf: return "lhalf";
    case LossType::Perceptual: return "perceptual";
  }
  return "?";
}

inline LossType parse_loss_type(const std::string& name) {
  if (name == "l2" || name == "L2") return LossType::L2;
  if (name == "lhalf" || name == "Lhalf" || name == "LHalf") return LossType::LHalf;
  if (name == "perceptual") return LossType::Perceptual;
  throw InvalidArgument("unknown loss '" + name + "' (expected l2, lhalf or perceptual)");
}

struct FeatureLayerSpec {
  int kernel_h = 3;
  int kernel_w = 3;
  int stride = 2;
  int out_channels = 16;
};

// Fixed convolutional feature extractor used by the perceptual loss. Each
// layer is a convolution followed by a rectifier; weights never change after
// construction.
class FeatureStack {
 public:
  // He-normal weights drawn from a generator seeded with `seed`, zero biases.
  static FeatureStack seeded(std::uint64_t seed,
                             std::vector<FeatureLayerSpec> layers = default_layers()) {
    if (layers.empty()) throw InvalidArgument("feature stack needs at least one layer");
    FeatureStack stack;
    stack.seed_ = seed;
    stack.layers_ = std::move(layers);
    std::mt19937_64 rng(seed);
    int in_c = Canvas::kChannels;
    for (const auto& l : stack.layers_) {
      if (l.kernel_h < 1 || l.kernel_w < 1 || l.stride < 1 || l.out_channels < 1) {
        throw InvalidArgument("feature layer dimensions must be positive");
      }
      const std::size_t fan_in = static_cast<std::size_t>(in_c) * l.kernel_h * l.kernel_w;
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
      std::vector<double> w(fan_in * l.out_channels);
      for (auto& v : w) v = normal(rng);
      stack.weights_.push_back(std::move(w));
      stack.biases_.emplace_back(l.out_channels, 0.0);
      in_c = l.out_channels;
    }
    return stack;
  }

  // Single 1x1 layer whose weights are the 3x3 identity: features equal pixels.
  static FeatureStack identity() {
    FeatureStack stack;
    stack.layers_ = {FeatureLayerSpec{1, 1, 1, Canvas::kChannels}};
    std::vector<double> w(Canvas::kChannels * Canvas::kChannels, 0.0);
    for (int c = 0; c < Canvas::kChannels; ++c) w[c * Canvas::kChannels + c] = 1.0;
    stack.weights_.push_back(std::move(w));
    stack.biases_.emplace_back(Canvas::kChannels, 0.0);
    return stack;
  }

  static std::vector<FeatureLayerSpec> default_layers() {
    return {FeatureLayerSpec{3, 3, 2, 16}, FeatureLayerSpec{3, 3, 2, 16},
            FeatureLayerSpec{3, 3, 2, 16}};
  }

  std::uint64_t seed() const { return seed_; }
  const std::vector<FeatureLayerSpec>& layers() const { return layers_; }
  // Layer weights in [out][in][kh][kw] order.
  const std::vector<double>& weights(std::size_t layer) const { return weights_.at(layer); }
  const std::vector<double>& biases(std::size_t layer) const { return biases_.at(layer); }

  // Per-layer shapes for an input of the given size; throws when any layer
  // would produce an empty map.
  std::vector<nn::ConvShape> shapes(int height, int width) const {
    std::vector<nn::ConvShape> out;
    int c = Canvas::kChannels, h = height, w = width;
    for (const auto& l : layers_) {
      nn::ConvShape s{c, h, w, l.out_channels, l.kernel_h, l.kernel_w, l.stride};
      if (!s.valid()) {
        throw InvalidArgument("input " + std::to_string(height) + "x" + std::to_string(width) +
                              " too small for perceptual feature layer " +
                              std::to_string(out.size() + 1));
      }
      out.push_back(s);
      c = s.out_c;
      h = s.out_h();
      w = s.out_w();
    }
    return out;
  }

  // Feature maps of every layer, each flattened in CHW order.
  std::vector<std::vector<double>> features(const Canvas& image) const {
    const auto sh = shapes(image.height(), image.width());
    std::vector<double> current(image.size());
    const std::size_t plane = static_cast<std::size_t>(image.height()) * image.width();
    auto px = image.data();
    for (std::size_t i = 0; i < plane; ++i) {
      for (int c = 0; c < Canvas::kChannels; ++c) current[c * plane + i] = px[i * 3 + c];
    }
    std::vector<std::vector<double>> maps;
    std::vector<double> cols;
    for (std::size_t n = 0; n < sh.size(); ++n) {
      const auto& s = sh[n];
      cols.resize(s.patch_size() * s.positions());
      nn::im2col<double>(s, current, cols);
      std::vector<double> out(s.output_size());
      nn::conv_forward<double>(s, weights_[n], biases_[n], cols, out);
      nn::relu_forward<double>(out);
      maps.push_back(out);
      current = std::move(out);
    }
    return maps;
  }

 private:
  std::uint64_t seed_ = 0;
  std::vector<FeatureLayerSpec> layers_;
  std::vector<std::vector<double>> weights_;
  std::vector<std::vector<double>> biases_;
};

// Which distance drives the reward, plus an optional Gaussian blur applied to
// the reference before comparison.
struct LossKind {
  LossType type = LossType::L2;
  double blur_sigma = 0.0;
  std::shared_ptr<const FeatureStack> features;  // required for Perceptual

  static LossKind l2() { return {LossType::L2, 0.0, nullptr}; }
  static LossKind lhalf() { return {LossType::LHalf, 0.0, nullptr}; }
  static LossKind perceptual(FeatureStack stack) {
    return {LossType::Perceptual, 0.0, std::make_shared<const FeatureStack>(std::move(stack))};
  }
  static LossKind from_name(const std::string& name, std::uint64_t feature_seed = 0) {
    const LossType t = parse_loss_type(name);
    if (t == LossType::Perceptual) return perceptual(FeatureStack::seeded(feature_seed));
    return {t, 0.0, nullptr};
  }

  // True for losses that are a mean of independent per-entry terms.
  bool is_pixelwise() const { return type != LossType::Perceptual; }
};

// Per-entry term of the pixelwise losses.
inline double pixel_term(LossType type, double a, double b) {
  const double d = a - b;
  return type == LossType::L2 ? d * d : std::sqrt(std::abs(d));
}

inline double loss_l2(const Canvas& image, const Canvas& reference) {
  require_same_shape(image, reference, "loss_l2");
  auto a = image.data();
  auto b = reference.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += pixel_term(LossType::L2, a[i], b[i]);
  return sum / static_cast<double>(a.size());
}

inline double loss_lhalf(const Canvas& image, const Canvas& reference) {
  require_same_shape(image, reference, "loss_lhalf");
  auto a = image.data();
  auto b = reference.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += pixel_term(LossType::LHalf, a[i], b[i]);
  return sum / static_cast<double>(a.size());
}

inline double feature_distance(const std::vector<std::vector<double>>& fa,
                               const std::vector<std::vector<double>>& fb) {
  double total = 0.0;
  for (std::size_t n = 0; n < fa.size(); ++n) {
    double sum = 0.0;
    for (std::size_t i = 0; i < fa[n].size(); ++i) {
      const double d = fa[n][i] - fb[n][i];
      sum += d * d;
    }
    total += sum / static_cast<double>(fa[n].size());
  }
  return total;
}

inline double loss_perceptual(const Canvas& image, const Canvas& reference,
                              const FeatureStack& features) {
  require_same_shape(image, reference, "loss_perceptual");
  return feature_distance(features.features(image), features.features(reference));
}

inline double evaluate_loss(const LossKind& kind, const Canvas& image, const Canvas& reference) {
  switch (kind.type) {
    case LossType::L2: return loss_l2(image, reference);
    case LossType::LHalf: return loss_lhalf(image, reference);
    case LossType::Perceptual:
      if (!kind.features) throw InvalidArgument("perceptual loss requires a feature stack");
      return loss_perceptual(image, reference, *kind.features);
  }
  return 0.0;
}

// Normalized 1-D Gaussian taps for offsets -radius..radius, radius = ceil(3 sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
  if (sigma <= 0.0) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += k[i + radius];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Mirror index into [0, n) without repeating the edge sample (d c b | a b c d | c b a).
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

inline Canvas gaussian_blur(const Canvas& image, double sigma) {
  if (sigma < 0.0) throw InvalidArgument("blur sigma must be non-negative");
  if (sigma == 0.0) return image;
  const auto k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  const int h = image.height();
  const int w = image.width();
  Canvas horizontal(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t) acc += k[t + radius] * image.at(r, reflect_index(c + t, w), ch);
        horizontal.at(r, c, ch) = acc;
      }
    }
  }
  Canvas out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t) acc += k[t + radius] * horizontal.at(reflect_index(r + t, h), c, ch);
        out.at(r, c, ch) = std::clamp(acc, 0.0, 1.0);
      }
    }
  }
  return out;
}

// Loss decrease of one step relative to the episode's initial loss.
inline double normalized_reward(double prev_loss, double cur_loss, double initial_loss) {
  if (!(initial_loss > 0.0)) throw InvalidArgument("normalized_reward: initial loss must be positive");
  return (prev_loss - cur_loss) / initial_loss;
}

}  // namespace paintbot
