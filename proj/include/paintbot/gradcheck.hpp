#pragma once

// Central finite-difference verification of every analytic gradient used in
// training: each layer type on its own, the composed policy/value network, and
// the full PPO objective.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "paintbot/nn.hpp"
#include "paintbot/policy.hpp"
#include "paintbot/trainer.hpp"

namespace paintbot {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 1e-4;

  double max_rel_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_error);
    return m;
  }
  bool passed() const { return max_rel_error() < tolerance; }
};

struct GradCheckOptions {
  std::uint64_t seed = 0;
  double step = 1e-5;
  // Observation sizes (height, concatenated width) for the composed-network checks.
  std::vector<std::pair<int, int>> sizes{{11, 22}};
  // Parameters probed per tensor in the composed checks (all when smaller).
  std::size_t probes_per_tensor = 24;
  // Test hook: scales analytic gradients to provoke a failure.
  double corrupt_scale = 1.0;
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-6, std::abs(analytic) + std::abs(numeric));
}

namespace detail {

// Compares analytic[i] against the central difference of f over values[i] for
// every index in `probe`.
inline double fd_compare(std::span<double> values, std::span<const double> analytic,
                         const std::vector<std::size_t>& probe, const std::function<double()>& f, double h,
                         double corrupt) {
  double worst = 0.0;
  for (std::size_t i : probe) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = f();
    values[i] = saved - h;
    const double down = f();
    values[i] = saved;
    worst = std::max(worst, relative_error(analytic[i] * corrupt, (up - down) / (2.0 * h)));
  }
  return worst;
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

inline std::vector<std::size_t> probe_indices(std::size_t offset, std::size_t count, std::size_t limit,
                                              std::mt19937_64& rng) {
  std::vector<std::size_t> v;
  if (count <= limit) {
    for (std::size_t i = 0; i < count; ++i) v.push_back(offset + i);
    return v;
  }
  std::uniform_int_distribution<std::size_t> pick(0, count - 1);
  for (std::size_t i = 0; i < limit; ++i) v.push_back(offset + pick(rng));
  return v;
}

inline void fill_uniform(std::span<double> v, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& x : v) x = u(rng);
}

// Zero biases let dead ReLUs feed exact-zero pre-activations downstream, where
// a central difference straddles the kink. Small random biases avoid that.
template <class Net>
void offset_conv_biases(Net& net, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (std::size_t t = 1; t < net.fc_index(); t += 2) {
    for (auto& v : net.tensor(t)) v = u(rng);
  }
}

}  // namespace detail

inline GradCheckEntry check_conv_layer(const GradCheckOptions& opt) {
  std::mt19937_64 rng(mix_seed(opt.seed, 1));
  const nn::ConvShape s{2, 7, 9, 3, 3, 3, 2};
  std::vector<double> input(s.input_size()), weight(s.weight_count()), bias(static_cast<std::size_t>(s.out_c));
  std::vector<double> coeff(s.output_size());
  detail::fill_uniform(input, -1, 1, rng);
  detail::fill_uniform(weight, -1, 1, rng);
  detail::fill_uniform(bias, -1, 1, rng);
  detail::fill_uniform(coeff, -1, 1, rng);
  // objective = sum coeff * conv(input)
  auto objective = [&] {
    std::vector<double> cols(s.patch_size() * s.positions()), out(s.output_size());
    nn::im2col<double>(s, input, cols);
    nn::conv_forward<double>(s, weight, bias, cols, out);
    double v = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) v += coeff[i] * out[i];
    return v;
  };
  std::vector<double> cols(s.patch_size() * s.positions());
  nn::im2col<double>(s, input, cols);
  std::vector<double> gw(weight.size(), 0.0), gb(bias.size(), 0.0), gcols(cols.size()), gin(input.size());
  nn::conv_backward<double>(s, weight, cols, coeff, gw, gb, gcols);
  nn::col2im<double>(s, gcols, gin);
  GradCheckEntry e{"conv", 0.0, weight.size() + bias.size() + input.size()};
  e.max_rel_error = std::max({detail::fd_compare(weight, gw, detail::all_indices(weight.size()), objective, opt.step, opt.corrupt_scale),
                              detail::fd_compare(bias, gb, detail::all_indices(bias.size()), objective, opt.step, opt.corrupt_scale),
                              detail::fd_compare(input, gin, detail::all_indices(input.size()), objective, opt.step, opt.corrupt_scale)});
  return e;
}

inline GradCheckEntry check_dense_layer(const GradCheckOptions& opt) {
  std::mt19937_64 rng(mix_seed(opt.seed, 2));
  const std::size_t in_n = 7, out_n = 5;
  std::vector<double> input(in_n), weight(in_n * out_n), bias(out_n), target(out_n);
  detail::fill_uniform(input, -1, 1, rng);
  detail::fill_uniform(weight, -1, 1, rng);
  detail::fill_uniform(bias, -1, 1, rng);
  detail::fill_uniform(target, -1, 1, rng);
  // objective = 0.5 * |W x + b - target|^2
  auto objective = [&] {
    std::vector<double> out(out_n);
    nn::dense_forward<double>(weight, bias, input, out);
    double v = 0.0;
    for (std::size_t i = 0; i < out_n; ++i) v += 0.5 * (out[i] - target[i]) * (out[i] - target[i]);
    return v;
  };
  std::vector<double> out(out_n), g(out_n);
  nn::dense_forward<double>(weight, bias, input, out);
  for (std::size_t i = 0; i < out_n; ++i) g[i] = out[i] - target[i];
  std::vector<double> gw(weight.size(), 0.0), gb(out_n, 0.0), gin(in_n);
  nn::dense_backward<double>(weight, input, g, gw, gb, gin);
  GradCheckEntry e{"dense", 0.0, weight.size() + bias.size() + input.size()};
  e.max_rel_error = std::max({detail::fd_compare(weight, gw, detail::all_indices(weight.size()), objective, opt.step, opt.corrupt_scale),
                              detail::fd_compare(bias, gb, detail::all_indices(bias.size()), objective, opt.step, opt.corrupt_scale),
                              detail::fd_compare(input, gin, detail::all_indices(input.size()), objective, opt.step, opt.corrupt_scale)});
  return e;
}

inline GradCheckEntry check_relu(const GradCheckOptions& opt) {
  std::mt19937_64 rng(mix_seed(opt.seed, 3));
  std::vector<double> x(32), coeff(32);
  detail::fill_uniform(coeff, -1, 1, rng);
  std::uniform_real_distribution<double> mag(0.05, 1.0);
  for (auto& v : x) v = (rng() & 1 ? 1.0 : -1.0) * mag(rng);  // keep clear of the kink
  auto objective = [&] {
    std::vector<double> y = x;
    nn::relu_forward<double>(y);
    double v = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) v += coeff[i] * y[i] * y[i];
    return v;
  };
  std::vector<double> y = x;
  nn::relu_forward<double>(y);
  std::vector<double> g(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) g[i] = 2.0 * coeff[i] * y[i];
  nn::relu_backward<double>(y, g);
  return {"relu", detail::fd_compare(x, g, detail::all_indices(x.size()), objective, opt.step, opt.corrupt_scale), x.size()};
}

inline NetworkArch gradcheck_arch(int h, int w) { return {h, w, 3, {{4, 3, 2}, {5, 3, 1}}, 8}; }

inline Observation random_observation(int h, int w, std::mt19937_64& rng) {
  Observation obs{h, w, std::vector<double>(static_cast<std::size_t>(h) * w * 3)};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : obs.values) v = u(rng);
  return obs;
}

// Composed network with a smooth objective over all three heads:
// 0.5 |mean - a|^2 + sum b * log_std + 0.5 (value - c)^2.
inline GradCheckEntry check_network(const GradCheckOptions& opt, int h, int w) {
  std::mt19937_64 rng(mix_seed(opt.seed, 4, static_cast<std::uint64_t>(h * 1000 + w)));
  auto net = init_params<double>(gradcheck_arch(h, w), mix_seed(opt.seed, 5));
  {
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    auto ls = net.tensor(net.log_std_index());
    for (auto& v : ls) v = -1.0 + u(rng);
    // Heads start near zero after init; give them signal.
    for (std::size_t t : {net.fc_index() + 2, net.fc_index() + 5}) {
      for (auto& v : net.tensor(t)) v = u(rng);
    }
  }
  detail::offset_conv_biases(net, rng);
  const Observation obs = random_observation(h, w, rng);
  std::array<double, kActionDim> a{}, b{};
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int d = 0; d < kActionDim; ++d) {
    a[d] = 0.5 + 0.4 * u(rng);
    b[d] = u(rng);
  }
  const double c = u(rng);
  ForwardCache<double> cache;
  auto objective = [&] {
    net.load_input(obs, cache.input);
    net.forward(cache);
    double v = 0.5 * (cache.value - c) * (cache.value - c);
    for (int d = 0; d < kActionDim; ++d) v += 0.5 * (cache.mean[d] - a[d]) * (cache.mean[d] - a[d]) + b[d] * cache.log_std[d];
    return v;
  };
  objective();
  HeadGradient<double> head;
  for (int d = 0; d < kActionDim; ++d) {
    head.mean[d] = cache.mean[d] - a[d];
    head.log_std[d] = b[d];
  }
  head.value = cache.value - c;
  std::vector<double> grads(net.parameter_count(), 0.0);
  net.backward(cache, head, grads);
  GradCheckEntry e{"network " + std::to_string(h) + "x" + std::to_string(w), 0.0, 0};
  for (const auto& t : net.tensors()) {
    const auto probe = detail::probe_indices(t.offset, t.count, opt.probes_per_tensor, rng);
    e.checked += probe.size();
    e.max_rel_error = std::max(e.max_rel_error, detail::fd_compare(net.params(), grads, probe, objective, opt.step, opt.corrupt_scale));
  }
  return e;
}

// Full PPO loss (clipped surrogate, value error, entropy) on a random batch
// whose behaviour log-probabilities differ from the current policy, so both
// clipped and unclipped branches are exercised.
inline GradCheckEntry check_ppo_objective(const GradCheckOptions& opt, int h, int w) {
  std::mt19937_64 rng(mix_seed(opt.seed, 6, static_cast<std::uint64_t>(h * 1000 + w)));
  auto net = init_params<double>(gradcheck_arch(h, w), mix_seed(opt.seed, 7));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t t : {net.fc_index() + 2, net.fc_index() + 5}) {
    for (auto& v : net.tensor(t)) v = 0.3 * u(rng);
  }
  detail::offset_conv_biases(net, rng);
  TrainConfig cfg;
  cfg.clip_eps = 0.2;
  cfg.value_coef = 0.5;
  cfg.entropy_coef = 0.01;
  std::vector<PpoSample> samples;
  for (int i = 0; i < 6; ++i) {
    PpoSample s;
    s.observation = random_observation(h, w, rng);
    const PolicyOutput out = net.forward(s.observation);
    for (int d = 0; d < kActionDim; ++d) s.raw_action[d] = out.mean[d] + 0.2 * u(rng);
    std::array<double, kActionDim> raw = s.raw_action;
    const double logp = gaussian_log_prob(out.mean, out.log_std, raw);
    // Offsets chosen so ratios land well inside or well outside [1-eps, 1+eps].
    const double offsets[] = {0.0, 0.05, -0.05, 0.6, -0.6, 0.4};
    s.old_log_prob = logp - offsets[i];
    s.advantage = (i % 2 == 0 ? 1.0 : -1.0) * (0.5 + 0.5 * std::abs(u(rng)));
    s.ret = u(rng);
    samples.push_back(s);
  }
  std::vector<const PpoSample*> batch;
  for (const auto& s : samples) batch.push_back(&s);
  auto objective = [&] { return ppo_loss<double>(net, batch, cfg); };
  std::vector<double> grads(net.parameter_count(), 0.0);
  ppo_loss_and_gradient<double>(net, batch, cfg, grads);
  GradCheckEntry e{"ppo objective " + std::to_string(h) + "x" + std::to_string(w), 0.0, 0};
  for (const auto& t : net.tensors()) {
    const auto probe = detail::probe_indices(t.offset, t.count, opt.probes_per_tensor, rng);
    e.checked += probe.size();
    e.max_rel_error = std::max(e.max_rel_error, detail::fd_compare(net.params(), grads, probe, objective, opt.step, opt.corrupt_scale));
  }
  return e;
}

inline GradCheckReport run_gradcheck(const GradCheckOptions& opt = {}) {
  GradCheckReport report;
  report.entries.push_back(check_conv_layer(opt));
  report.entries.push_back(check_dense_layer(opt));
  report.entries.push_back(check_relu(opt));
  for (const auto& [h, w] : opt.sizes) {
    report.entries.push_back(check_network(opt, h, w));
    report.entries.push_back(check_ppo_objective(opt, h, w));
  }
  return report;
}

}  // namespace paintbot
