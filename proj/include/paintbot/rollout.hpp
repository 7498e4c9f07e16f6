#pragma once

// Run-time painting: repeatedly start a stroke at a random point and extend it
// with the policy mean until the value head predicts no further gain, then
// repeat across a coarse-to-fine pyramid.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "paintbot/canvas.hpp"
#include "paintbot/env.hpp"
#include "paintbot/error.hpp"
#include "paintbot/losses.hpp"
#include "paintbot/policy.hpp"

namespace paintbot {

struct RolloutConfig {
  double thresh_sim = 0.0;  // stop once loss(canvas, reference) <= thresh_sim
  double value_stop = 0.0;  // a stroke ends when the predicted value <= value_stop
  int max_strokes_total = 1000;
  int max_segments_per_stroke = 16;
  std::vector<double> scales{1.0};
  std::uint64_t seed = 0;

  void validate() const {
    if (!(thresh_sim >= 0.0)) throw InvalidArgument("thresh_sim must be non-negative");
    if (max_strokes_total < 1 || max_segments_per_stroke < 1) throw InvalidArgument("rollout caps must be >= 1");
    if (scales.empty()) throw InvalidArgument("at least one scale is required");
    for (std::size_t i = 0; i < scales.size(); ++i) {
      if (!(scales[i] > 0.0 && scales[i] <= 1.0)) throw InvalidArgument("scales must lie in (0,1]");
      if (i > 0 && !(scales[i] > scales[i - 1])) throw InvalidArgument("scales must be strictly increasing");
    }
    if (scales.back() != 1.0) throw InvalidArgument("the last scale must be 1.0");
  }
};

// One rendered segment. (x, y) is the pen position where the segment starts,
// in the pixel space of the scale it was painted at.
struct StrokeRecord {
  int stroke = 0;
  int segment = 0;
  double x = 0.0;
  double y = 0.0;
  StrokeParams params;
  int scale = 0;  // index into RolloutConfig::scales
};

struct PaintResult {
  Canvas canvas;
  std::vector<StrokeRecord> strokes;
  int strokes_started = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// Policy hook used by paint(); the default evaluates a network.
using PolicyFn = std::function<PolicyOutput(const Observation&)>;

inline PolicyFn network_policy(const NetworkParams& net) {
  auto cache = std::make_shared<ForwardCache<float>>();
  return [&net, cache](const Observation& obs) {
    net.load_input(obs, cache->input);
    net.forward(*cache);
    return NetworkParams::to_output(*cache);
  };
}

inline PaintResult paint(const Canvas& reference, const PolicyFn& policy, const RolloutConfig& cfg,
                         const EnvConfig& env, const LossKind& loss,
                         const std::optional<Canvas>& init_canvas = std::nullopt, int scale_index = 0,
                         int first_stroke_id = 0) {
  cfg.validate();
  EnvState state = env_reset(reference, init_canvas, std::nullopt, loss, env);
  PaintResult out;
  out.initial_loss = state.initial_loss;
  std::mt19937_64 rng(cfg.seed + 0x9E37ull * static_cast<std::uint64_t>(scale_index));
  std::uniform_int_distribution<int> row_dist(0, reference.height() - 1);
  std::uniform_int_distribution<int> col_dist(0, reference.width() - 1);
  while (state.prev_loss > cfg.thresh_sim && out.strokes_started < cfg.max_strokes_total) {
    const int col = col_dist(rng);
    const int row = row_dist(rng);
    state.pen = {static_cast<double>(col), static_cast<double>(row)};
    const int stroke_id = first_stroke_id + out.strokes_started;
    ++out.strokes_started;
    Observation obs = extract_observation(state, env);
    for (int seg = 0; seg < cfg.max_segments_per_stroke; ++seg) {
      const PolicyOutput pred = policy(obs);
      if (pred.value <= cfg.value_stop) break;
      const PenState start = state.pen;
      StepResult step = env_step(state, mean_action(pred), loss, env);
      out.strokes.push_back({stroke_id, seg, start.x, start.y, step.stroke, scale_index});
      obs = std::move(step.observation);
    }
  }
  out.final_loss = state.prev_loss;
  out.canvas = std::move(state.canvas);
  return out;
}

inline PaintResult paint(const Canvas& reference, const NetworkParams& net, const RolloutConfig& cfg,
                         const EnvConfig& env, const LossKind& loss) {
  return paint(reference, network_policy(net), cfg, env, loss);
}

inline std::pair<int, int> scaled_size(const Canvas& reference, double scale) {
  return {std::max(1, static_cast<int>(std::lround(reference.height() * scale))),
          std::max(1, static_cast<int>(std::lround(reference.width() * scale)))};
}

// Paints each pyramid level in turn; later levels start from the bilinearly
// upsampled canvas of the previous one.
inline PaintResult paint_multiscale(const Canvas& reference, const PolicyFn& policy, const RolloutConfig& cfg,
                                    const EnvConfig& env, const LossKind& loss) {
  cfg.validate();
  PaintResult total;
  std::optional<Canvas> canvas;
  for (std::size_t s = 0; s < cfg.scales.size(); ++s) {
    const auto [h, w] = scaled_size(reference, cfg.scales[s]);
    const Canvas ref_s = resize_area(reference, h, w);
    if (canvas) canvas = resize_bilinear(*canvas, h, w);
    PaintResult level = paint(ref_s, policy, cfg, env, loss, canvas, static_cast<int>(s), total.strokes_started);
    if (s == 0) total.initial_loss = level.initial_loss;
    total.strokes_started += level.strokes_started;
    total.strokes.insert(total.strokes.end(), level.strokes.begin(), level.strokes.end());
    total.final_loss = level.final_loss;
    canvas = std::move(level.canvas);
  }
  total.canvas = std::move(*canvas);
  return total;
}

inline PaintResult paint_multiscale(const Canvas& reference, const NetworkParams& net, const RolloutConfig& cfg,
                                    const EnvConfig& env, const LossKind& loss) {
  return paint_multiscale(reference, network_policy(net), cfg, env, loss);
}

// Re-renders a stroke log from a white canvas, upsampling between scales
// exactly as paint_multiscale does.
inline Canvas replay_strokes(const std::vector<StrokeRecord>& strokes, int height, int width,
                             const std::vector<double>& scales, const EnvConfig& env) {
  if (scales.empty()) throw InvalidArgument("replay needs at least one scale");
  const Canvas shape(height, width);
  std::optional<Canvas> canvas;
  std::size_t next = 0;
  for (std::size_t s = 0; s < scales.size(); ++s) {
    const auto [h, w] = scaled_size(shape, scales[s]);
    canvas = canvas ? resize_bilinear(*canvas, h, w) : Canvas(h, w);
    for (; next < strokes.size() && strokes[next].scale == static_cast<int>(s); ++next) {
      const auto& r = strokes[next];
      const PenState from{r.x, r.y};
      const PenState to = clamp_pen(advance_pen(from, r.params.angle, r.params.length), h, w);
      render_segment_into(*canvas, from, to, r.params.width, r.params.color, env.beta, env.w_eps);
    }
  }
  if (next != strokes.size()) throw InvalidArgument("stroke log references a scale outside the schedule");
  return std::move(*canvas);
}

inline const char* kStrokeLogHeader = "stroke,segment,x,y,angle,length,width,r,g,b,scale";

// Values are printed with 17 significant digits so a replay is bit-exact.
inline void write_stroke_log(const std::vector<StrokeRecord>& strokes, std::ostream& out) {
  out << kStrokeLogHeader << "\n";
  char buf[512];
  for (const auto& r : strokes) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d", r.stroke, r.segment,
                  r.x, r.y, r.params.angle, r.params.length, r.params.width, r.params.color.r, r.params.color.g,
                  r.params.color.b, r.scale);
    out << buf << "\n";
  }
}

inline void save_stroke_log(const std::vector<StrokeRecord>& strokes, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write stroke log", path);
  write_stroke_log(strokes, out);
  if (!out) throw IoError("stroke log write failed", path);
}

inline std::vector<StrokeRecord> read_stroke_log(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kStrokeLogHeader) throw FormatError("stroke log: missing header");
  std::vector<StrokeRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    StrokeRecord r;
    double cr = 0, cg = 0, cb = 0;
    if (std::sscanf(line.c_str(), "%d,%d,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%d", &r.stroke, &r.segment, &r.x, &r.y,
                    &r.params.angle, &r.params.length, &r.params.width, &cr, &cg, &cb, &r.scale) != 11) {
      throw FormatError("stroke log: malformed row '" + line + "'");
    }
    r.params.color = {cr, cg, cb};
    out.push_back(r);
  }
  return out;
}

inline std::vector<StrokeRecord> load_stroke_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open stroke log", path);
  return read_stroke_log(in);
}

}  // namespace paintbot
