#pragma once

// Simplified simulated painting environment: a canvas, a pen, and one straight
// capsule-shaped segment rendered per action.

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "paintbot/canvas.hpp"
#include "paintbot/error.hpp"
#include "paintbot/losses.hpp"

namespace paintbot {

inline constexpr int kActionDim = 6;

struct EnvConfig {
  double l_max = 16.0;
  double w_max = 4.0;
  double w_eps = 0.5;     // widths below this move the pen without painting
  double beta = 1.0;      // color blending: new = beta * color + (1 - beta) * old
  int obs_h = 41;
  int obs_w = 41;
  double pad_value = 1.0;

  void validate() const {
    if (!(l_max > 0.0)) throw InvalidArgument("l_max must be positive");
    if (!(w_max > 0.0)) throw InvalidArgument("w_max must be positive");
    if (!(w_eps >= 0.0 && w_eps < w_max)) throw InvalidArgument("w_eps must lie in [0, w_max)");
    if (!(beta >= 0.0 && beta <= 1.0)) throw InvalidArgument("beta must lie in [0,1]");
    if (obs_h < 1 || obs_w < 1 || obs_h % 2 == 0 || obs_w % 2 == 0) {
      throw InvalidArgument("observation patch dimensions must be odd and positive");
    }
    if (!(pad_value >= 0.0 && pad_value <= 1.0)) throw InvalidArgument("pad_value must lie in [0,1]");
  }
};

// Raw policy output [angle, length, width, r, g, b], each in [0,1].
struct Action {
  std::array<double, kActionDim> values{};

  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  bool operator==(const Action&) const = default;
};

struct StrokeParams {
  double angle = 0.0;   // radians in [0, 2 pi)
  double length = 0.0;  // pixels
  double width = 0.0;   // pixels
  Rgb color;
};

// Continuous pen position: x is the column axis, y the row axis (downward).
struct PenState {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const PenState&) const = default;
};

inline StrokeParams decode_action(const Action& a, const EnvConfig& cfg) {
  for (std::size_t i = 0; i < kActionDim; ++i) {
    if (!(a[i] >= 0.0 && a[i] <= 1.0)) {
      throw InvalidArgument("action component " + std::to_string(i) + " outside [0,1]: " +
                            std::to_string(a[i]));
    }
  }
  StrokeParams s;
  s.angle = 2.0 * std::numbers::pi * a[0];
  if (s.angle >= 2.0 * std::numbers::pi) s.angle = 0.0;
  s.length = a[1] * cfg.l_max;
  s.width = a[2] * cfg.w_max;
  s.color = {a[3], a[4], a[5]};
  return s;
}

inline PenState advance_pen(PenState p, double angle, double length) {
  return {p.x + length * std::sin(angle), p.y + length * std::cos(angle)};
}

inline PenState clamp_pen(PenState p, int height, int width) {
  return {std::clamp(p.x, 0.0, width - 1.0), std::clamp(p.y, 0.0, height - 1.0)};
}

// Pixels whose centers may fall inside the capsule, clipped to the canvas.
inline PixelRect capsule_bounds(const Canvas& canvas, PenState from, PenState to, double width) {
  const double half = width / 2.0;
  PixelRect r;
  r.col0 = std::max(0, static_cast<int>(std::ceil(std::min(from.x, to.x) - half)));
  r.col1 = std::min(canvas.width(), static_cast<int>(std::floor(std::max(from.x, to.x) + half)) + 1);
  r.row0 = std::max(0, static_cast<int>(std::ceil(std::min(from.y, to.y) - half)));
  r.row1 = std::min(canvas.height(), static_cast<int>(std::floor(std::max(from.y, to.y) + half)) + 1);
  return r;
}

// In-place capsule rasterization. Pixel (row, col) has its center at
// (x = col, y = row) and is painted when that center lies within width/2 of
// the segment. Returns the rectangle that may have changed.
inline PixelRect render_segment_into(Canvas& canvas, PenState from, PenState to, double width,
                                     Rgb color, double beta, double w_eps = 0.5) {
  if (!(width >= w_eps) || width <= 0.0) return {};
  const PixelRect box = capsule_bounds(canvas, from, to, width);
  if (box.empty()) return {};
  const double half = width / 2.0;
  const double half_sq = half * half;
  const double dx = to.x - from.x;
  const double dy = to.y - from.y;
  const double len_sq = dx * dx + dy * dy;
  const double keep = 1.0 - beta;
  const std::array<double, 3> paint{beta * color.r, beta * color.g, beta * color.b};
  for (int row = box.row0; row < box.row1; ++row) {
    for (int col = box.col0; col < box.col1; ++col) {
      const double px = col - from.x;
      const double py = row - from.y;
      double t = len_sq > 0.0 ? (px * dx + py * dy) / len_sq : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double ex = px - t * dx;
      const double ey = py - t * dy;
      if (ex * ex + ey * ey > half_sq) continue;
      double* p = &canvas.at(row, col, 0);
      for (int ch = 0; ch < 3; ++ch) p[ch] = std::clamp(paint[ch] + keep * p[ch], 0.0, 1.0);
    }
  }
  return box;
}

inline Canvas render_segment(const Canvas& canvas, PenState from, PenState to, double width,
                             Rgb color, double beta, double w_eps = 0.5) {
  Canvas out = canvas;
  render_segment_into(out, from, to, width, color, beta, w_eps);
  return out;
}

// h_o x (2 w_o) x 3 patch: canvas crop on the left, reference crop on the right.
struct Observation {
  int height = 0;
  int width = 0;  // total width, 2 * w_o
  std::vector<double> values;

  double at(int row, int col, int ch) const {
    return values[(static_cast<std::size_t>(row) * width + col) * 3 + ch];
  }
};

struct EnvState {
  Canvas canvas;
  Canvas reference;              // loss target
  Canvas observation_reference;  // what the policy sees; may be a blurred copy
  PenState pen;
  int step_count = 0;
  double initial_loss = 0.0;
  double prev_loss = 0.0;
  double loss_sum = 0.0;  // running sum of per-entry terms for pixelwise losses
  std::shared_ptr<const std::vector<std::vector<double>>> reference_features;
};

// Nearest pixel to a continuous coordinate, rounding halves up.
inline int pixel_of(double coord) { return static_cast<int>(std::floor(coord + 0.5)); }

inline void copy_patch(const Canvas& src, int center_row, int center_col, const EnvConfig& cfg,
                       int col_offset, Observation& obs) {
  const int r0 = center_row - cfg.obs_h / 2;
  const int c0 = center_col - cfg.obs_w / 2;
  for (int r = 0; r < cfg.obs_h; ++r) {
    const int sr = r0 + r;
    for (int c = 0; c < cfg.obs_w; ++c) {
      const int sc = c0 + c;
      double* dst = &obs.values[(static_cast<std::size_t>(r) * obs.width + col_offset + c) * 3];
      if (sr < 0 || sr >= src.height() || sc < 0 || sc >= src.width()) {
        dst[0] = dst[1] = dst[2] = cfg.pad_value;
      } else {
        const double* s = &src.at(sr, sc, 0);
        dst[0] = s[0];
        dst[1] = s[1];
        dst[2] = s[2];
      }
    }
  }
}

inline Observation observe(const Canvas& canvas, const Canvas& reference, PenState pen,
                           const EnvConfig& cfg) {
  Observation obs;
  obs.height = cfg.obs_h;
  obs.width = 2 * cfg.obs_w;
  obs.values.resize(static_cast<std::size_t>(obs.height) * obs.width * 3);
  const int row = pixel_of(pen.y);
  const int col = pixel_of(pen.x);
  copy_patch(canvas, row, col, cfg, 0, obs);
  copy_patch(reference, row, col, cfg, cfg.obs_w, obs);
  return obs;
}

inline Observation extract_observation(const EnvState& state, const EnvConfig& cfg) {
  return observe(state.canvas, state.observation_reference, state.pen, cfg);
}

namespace detail {

inline double region_sum(LossType type, const Canvas& a, const Canvas& b, const PixelRect& box) {
  double sum = 0.0;
  for (int row = box.row0; row < box.row1; ++row) {
    const double* pa = &a.at(row, box.col0, 0);
    const double* pb = &b.at(row, box.col0, 0);
    const int n = (box.col1 - box.col0) * 3;
    for (int i = 0; i < n; ++i) sum += pixel_term(type, pa[i], pb[i]);
  }
  return sum;
}

inline double current_loss(const EnvState& state, const LossKind& loss) {
  if (loss.is_pixelwise()) {
    return std::max(0.0, state.loss_sum / static_cast<double>(state.canvas.size()));
  }
  return feature_distance(loss.features->features(state.canvas), *state.reference_features);
}

}  // namespace detail

// Starts an episode. The loss target is the reference (blurred when
// loss.blur_sigma > 0); observation_reference overrides what the policy sees.
inline EnvState env_reset(const Canvas& reference, const std::optional<Canvas>& init_canvas,
                          const std::optional<PenState>& init_pen, const LossKind& loss,
                          const EnvConfig& cfg,
                          const std::optional<Canvas>& observation_reference = std::nullopt) {
  cfg.validate();
  if (reference.empty()) throw InvalidArgument("env_reset: empty reference");
  if (init_canvas) require_same_shape(*init_canvas, reference, "env_reset init_canvas");
  if (observation_reference) {
    require_same_shape(*observation_reference, reference, "env_reset observation_reference");
  }
  if (loss.type == LossType::Perceptual && !loss.features) {
    throw InvalidArgument("perceptual loss requires a feature stack");
  }
  EnvState s;
  s.reference = loss.blur_sigma > 0.0 ? gaussian_blur(reference, loss.blur_sigma) : reference;
  s.observation_reference = observation_reference ? *observation_reference : reference;
  s.canvas = init_canvas ? *init_canvas : Canvas(reference.height(), reference.width());
  s.pen = init_pen ? clamp_pen(*init_pen, reference.height(), reference.width())
                   : PenState{static_cast<double>((reference.width() - 1) / 2),
                              static_cast<double>((reference.height() - 1) / 2)};
  if (loss.is_pixelwise()) {
    s.loss_sum = detail::region_sum(loss.type, s.canvas, s.reference,
                                    PixelRect{0, 0, reference.height(), reference.width()});
  } else {
    s.reference_features = std::make_shared<const std::vector<std::vector<double>>>(
        loss.features->features(s.reference));
  }
  s.initial_loss = detail::current_loss(s, loss);
  s.prev_loss = s.initial_loss;
  return s;
}

struct StepResult {
  double reward = 0.0;
  Observation observation;
  StrokeParams stroke;
  PenState from;
  PenState to;
};

// Decode, move the pen (clamped), paint the segment, and score the change.
// Mutates the state in place.
inline StepResult env_step(EnvState& state, const Action& action, const LossKind& loss,
                           const EnvConfig& cfg) {
  StepResult out;
  out.stroke = decode_action(action, cfg);
  out.from = state.pen;
  out.to = clamp_pen(advance_pen(state.pen, out.stroke.angle, out.stroke.length),
                     state.canvas.height(), state.canvas.width());
  if (out.stroke.width >= cfg.w_eps && out.stroke.width > 0.0) {
    if (loss.is_pixelwise()) {
      const PixelRect box = capsule_bounds(state.canvas, out.from, out.to, out.stroke.width);
      if (!box.empty()) {
        const double before = detail::region_sum(loss.type, state.canvas, state.reference, box);
        render_segment_into(state.canvas, out.from, out.to, out.stroke.width, out.stroke.color,
                            cfg.beta, cfg.w_eps);
        const double after = detail::region_sum(loss.type, state.canvas, state.reference, box);
        state.loss_sum += after - before;
      }
    } else {
      render_segment_into(state.canvas, out.from, out.to, out.stroke.width, out.stroke.color,
                          cfg.beta, cfg.w_eps);
    }
  }
  state.pen = out.to;
  const double cur = detail::current_loss(state, loss);
  out.reward = state.initial_loss > 0.0
                   ? normalized_reward(state.prev_loss, cur, state.initial_loss)
                   : 0.0;
  state.prev_loss = cur;
  ++state.step_count;
  out.observation = extract_observation(state, cfg);
  return out;
}

}  // namespace paintbot
