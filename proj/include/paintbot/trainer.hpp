#pragma once

// PPO training with a curriculum horizon, value-based difficulty sampling of
// references, and blurred-reference observations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "paintbot/adam.hpp"
#include "paintbot/config.hpp"
#include "paintbot/dataset.hpp"
#include "paintbot/env.hpp"
#include "paintbot/losses.hpp"
#include "paintbot/policy.hpp"

namespace paintbot {

// splitmix64 finalizer; combines a base seed with stream identifiers.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ (b * 0xD1B54A32D192ED03ULL));
}

struct Transition {
  Observation observation;
  Action action;                                 // executed (clipped)
  std::array<double, kActionDim> raw_action{};   // sampled, pre-clip
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;
  bool done = false;
};

struct Trajectory {
  std::vector<Transition> steps;
  double episode_return = 0.0;
  std::size_t reference_index = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  Canvas initial_canvas;
  Canvas final_canvas;
};

// 1-based index of the first reward strictly above r_thresh, else the cap.
inline int curriculum_horizon(std::span<const double> rewards, double r_thresh, int t_max_cap) {
  const int n = std::min<int>(static_cast<int>(rewards.size()), t_max_cap);
  for (int i = 0; i < n; ++i) {
    if (rewards[i] > r_thresh) return i + 1;
  }
  return t_max_cap;
}

// Linear ramp from thresh_start to thresh_max over the first
// thresh_ramp_fraction of training, flat afterwards. `progress` is the share
// of training completed, in [0,1].
inline double thresh_at_progress(double progress, const TrainConfig& cfg) {
  if (progress <= 0.0) return cfg.thresh_start;
  if (progress >= cfg.thresh_ramp_fraction) return cfg.thresh_max;
  return cfg.thresh_start + (cfg.thresh_max - cfg.thresh_start) * (progress / cfg.thresh_ramp_fraction);
}

inline double schedule_thresh(int episode, const TrainConfig& cfg) {
  if (episode < 0) throw InvalidArgument("schedule_thresh: episode must be >= 0");
  return thresh_at_progress(static_cast<double>(episode) / cfg.episodes, cfg);
}

// Index of the smallest estimate; ties go to the lowest index.
inline std::size_t argmin_index(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("argmin of an empty set");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] < values[best]) best = i;
  }
  return best;
}

// Difficulty-based sampling with an arbitrary difficulty estimator.
template <class Estimate>
std::size_t select_reference(const Dataset& dataset, Estimate&& estimate) {
  if (dataset.size() == 0) throw InvalidArgument("select_reference: empty dataset");
  std::vector<double> values(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) values[i] = estimate(i);
  return argmin_index(values);
}

// Observation at episode start: blank canvas, pen at the center pixel.
inline Observation reset_observation(const Canvas& observation_reference, const EnvConfig& env) {
  const Canvas blank(observation_reference.height(), observation_reference.width());
  const PenState center{static_cast<double>((observation_reference.width() - 1) / 2),
                        static_cast<double>((observation_reference.height() - 1) / 2)};
  return observe(blank, observation_reference, center, env);
}

// Value-network difficulty: V evaluated on each reference's reset observation.
inline std::size_t select_reference(const Dataset& dataset, const NetworkParams& net,
                                    const std::vector<Canvas>& observation_refs, const EnvConfig& env) {
  return select_reference(dataset, [&](std::size_t i) {
    return net.forward(reset_observation(observation_refs[i], env)).value;
  });
}

struct EpisodeSetup {
  const Canvas* reference = nullptr;
  const Canvas* observation_reference = nullptr;
  std::optional<Canvas> init_canvas;
  std::optional<PenState> init_pen;
};

struct CollectOptions {
  int horizon_cap = 10;
  std::optional<double> r_thresh;  // curriculum stop rule; none = run to the cap
};

template <class Rng>
Trajectory collect_trajectory(const EpisodeSetup& setup, const NetworkParams& net, const LossKind& loss,
                              const EnvConfig& env, const CollectOptions& opt, Rng& rng) {
  if (opt.horizon_cap < 1) throw InvalidArgument("collect_trajectory: horizon cap must be >= 1");
  EnvState state = env_reset(*setup.reference, setup.init_canvas, setup.init_pen, loss, env,
                             setup.observation_reference ? std::optional<Canvas>(*setup.observation_reference)
                                                         : std::nullopt);
  Trajectory traj;
  traj.initial_loss = state.initial_loss;
  traj.initial_canvas = state.canvas;
  ForwardCache<float> cache;
  Observation obs = extract_observation(state, env);
  std::vector<double> rewards;
  for (int t = 0; t < opt.horizon_cap; ++t) {
    net.load_input(obs, cache.input);
    net.forward(cache);
    const PolicyOutput out = NetworkParams::to_output(cache);
    const SampledAction s = sample_action(out, rng);
    StepResult step = env_step(state, s.action, loss, env);
    Transition tr;
    tr.observation = std::move(obs);
    tr.action = s.action;
    tr.raw_action = s.raw;
    tr.log_prob = s.log_prob;
    tr.reward = step.reward;
    tr.value = out.value;
    traj.episode_return += step.reward;
    rewards.push_back(step.reward);
    obs = std::move(step.observation);
    const bool stop = opt.r_thresh && curriculum_horizon(rewards, *opt.r_thresh, opt.horizon_cap) ==
                                          static_cast<int>(rewards.size());
    tr.done = stop || t + 1 == opt.horizon_cap;
    traj.steps.push_back(std::move(tr));
    if (traj.steps.back().done) break;
  }
  traj.final_loss = state.prev_loss;
  traj.final_canvas = std::move(state.canvas);
  return traj;
}

struct Advantages {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// Generalized advantage estimation; the value beyond the last step is 0.
inline Advantages compute_advantages(const Trajectory& traj, double gamma, double lambda) {
  const std::size_t n = traj.steps.size();
  if (n == 0) throw InvalidArgument("compute_advantages: empty trajectory");
  Advantages out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double running = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double next_value = i + 1 < n ? traj.steps[i + 1].value : 0.0;
    const double delta = traj.steps[i].reward + gamma * next_value - traj.steps[i].value;
    running = delta + gamma * lambda * running;
    out.advantages[i] = running;
    out.returns[i] = running + traj.steps[i].value;
  }
  return out;
}

// Zero mean / unit variance for batches of two or more; a single advantage
// keeps its sign and is scaled to unit magnitude.
inline void normalize_advantages(std::span<double> adv) {
  if (adv.empty()) return;
  if (adv.size() == 1) {
    adv[0] = adv[0] / (std::abs(adv[0]) + 1e-8);
    return;
  }
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / static_cast<double>(adv.size());
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double stddev = std::sqrt(var / static_cast<double>(adv.size()));
  for (double& a : adv) a = (a - mean) / (stddev + 1e-8);
}

struct PpoSample {
  Observation observation;
  std::array<double, kActionDim> raw_action{};
  double old_log_prob = 0.0;
  double advantage = 0.0;
  double ret = 0.0;
};

struct PpoStats {
  double surrogate = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  int minibatches = 0;
};

// Loss (negated clipped-surrogate objective plus weighted value error minus
// entropy bonus) averaged over `batch`, with its gradient accumulated into
// `grads`. Also reports the raw terms through `stats` (summed, not averaged).
template <class T>
double ppo_loss_and_gradient(const PolicyNetwork<T>& net, std::span<const PpoSample* const> batch,
                             const TrainConfig& cfg, std::span<T> grads, PpoStats* stats = nullptr) {
  if (batch.empty()) throw InvalidArgument("ppo: empty batch");
  const T inv_n = T(1) / static_cast<T>(batch.size());
  ForwardCache<T> cache;
  double loss = 0.0;
  double surrogate = 0.0, value_loss = 0.0, entropy = 0.0, clipped = 0.0;
  for (const PpoSample* s : batch) {
    net.load_input(s->observation, cache.input);
    net.forward(cache);
    std::array<T, kActionDim> raw{};
    for (int d = 0; d < kActionDim; ++d) raw[d] = static_cast<T>(s->raw_action[d]);
    const T logp = gaussian_log_prob(cache.mean, cache.log_std, raw);
    const T ratio = std::exp(logp - static_cast<T>(s->old_log_prob));
    const T adv = static_cast<T>(s->advantage);
    const T lo = static_cast<T>(1.0 - cfg.clip_eps);
    const T hi = static_cast<T>(1.0 + cfg.clip_eps);
    const T unclipped = ratio * adv;
    const T clipped_term = std::clamp(ratio, lo, hi) * adv;
    const bool is_clipped = clipped_term < unclipped;
    const T surr = is_clipped ? clipped_term : unclipped;
    const T verr = cache.value - static_cast<T>(s->ret);
    const T ent = gaussian_entropy(cache.log_std);
    loss += static_cast<double>(inv_n * (-surr + static_cast<T>(cfg.value_coef) * verr * verr -
                                         static_cast<T>(cfg.entropy_coef) * ent));
    surrogate += static_cast<double>(surr);
    value_loss += static_cast<double>(verr * verr);
    entropy += static_cast<double>(ent);
    if (ratio < lo || ratio > hi) clipped += 1.0;

    HeadGradient<T> head;
    // d(-surr)/dlogp = -ratio * adv on the unclipped branch, 0 when clipped.
    const T dlogp = is_clipped ? T(0) : -unclipped * inv_n;
    for (int d = 0; d < kActionDim; ++d) {
      const T inv_var = std::exp(-T(2) * cache.log_std[d]);
      const T diff = raw[d] - cache.mean[d];
      head.mean[d] = dlogp * diff * inv_var;
      head.log_std[d] = dlogp * (diff * diff * inv_var - T(1)) - static_cast<T>(cfg.entropy_coef) * inv_n;
    }
    head.value = T(2) * static_cast<T>(cfg.value_coef) * verr * inv_n;
    net.backward(cache, head, grads);
  }
  if (stats) {
    stats->surrogate += surrogate;
    stats->value_loss += value_loss;
    stats->entropy += entropy;
    stats->clip_fraction += clipped;
  }
  return loss;
}

template <class T>
double ppo_loss(const PolicyNetwork<T>& net, std::span<const PpoSample* const> batch, const TrainConfig& cfg) {
  std::vector<T> scratch(net.parameter_count(), T(0));
  return ppo_loss_and_gradient(net, batch, cfg, std::span<T>(scratch));
}

inline double clip_grad_norm(std::span<float> grads, double max_norm) {
  double sq = 0.0;
  for (float g : grads) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const float scale = static_cast<float>(max_norm / (norm + 1e-12));
    for (float& g : grads) g *= scale;
  }
  return norm;
}

// Several epochs of shuffled minibatch Adam steps on the clipped surrogate.
// Stats are averaged over every sample visit across all epochs.
template <class Rng>
PpoStats ppo_update(NetworkParams& net, Adam<float>& optimizer, const std::vector<PpoSample>& batch,
                    const TrainConfig& cfg, Rng& rng) {
  if (batch.empty()) throw InvalidArgument("ppo_update: empty batch");
  PpoStats stats;
  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<float> grads(net.parameter_count());
  std::vector<const PpoSample*> mb;
  long visits = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.minibatch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.minibatch_size));
      mb.clear();
      for (std::size_t i = start; i < end; ++i) mb.push_back(&batch[order[i]]);
      std::fill(grads.begin(), grads.end(), 0.0f);
      ppo_loss_and_gradient<float>(net, mb, cfg, grads, &stats);
      visits += static_cast<long>(mb.size());
      clip_grad_norm(grads, cfg.max_grad_norm);
      optimizer.step(net.params(), grads);
      net.clamp_log_std();
      ++stats.minibatches;
    }
  }
  const double n = static_cast<double>(visits);
  stats.surrogate /= n;
  stats.value_loss /= n;
  stats.entropy /= n;
  stats.clip_fraction /= n;
  return stats;
}

struct MetricsRow {
  int episode = 0;
  double mean_reward = 0.0;
  double surrogate = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double horizon = 0.0;
};

inline const char* kMetricsHeader = "episode,mean_reward,surrogate,value_loss,entropy,clip_fraction,horizon";

inline std::string format_metrics_row(const MetricsRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", r.episode, r.mean_reward, r.surrogate,
                r.value_loss, r.entropy, r.clip_fraction, r.horizon);
  return buf;
}

struct EvalResult {
  double mean_return = 0.0;       // mean over references of the episode's summed reward
  double mean_final_ratio = 0.0;  // mean of L_t / L_0 over references with L_0 > 0
};

// Runs one fixed-length episode per reference from a blank canvas with the
// pen at the center. `policy(obs, rng)` returns the action to execute.
template <class Policy>
EvalResult evaluate_policy(const std::vector<Canvas>& references, Policy&& policy, const LossKind& loss,
                           const EnvConfig& env, int steps, double observation_blur, std::uint64_t seed) {
  if (references.empty()) throw InvalidArgument("evaluate_policy: no references");
  EvalResult r;
  int ratio_count = 0;
  for (std::size_t i = 0; i < references.size(); ++i) {
    std::mt19937_64 rng(mix_seed(seed, 0xE7A1, i));
    std::optional<Canvas> obs_ref;
    if (observation_blur > 0.0) obs_ref = gaussian_blur(references[i], observation_blur);
    EnvState state = env_reset(references[i], std::nullopt, std::nullopt, loss, env, obs_ref);
    Observation obs = extract_observation(state, env);
    double ret = 0.0;
    for (int t = 0; t < steps; ++t) {
      StepResult step = env_step(state, policy(obs, rng), loss, env);
      ret += step.reward;
      obs = std::move(step.observation);
    }
    r.mean_return += ret;
    if (state.initial_loss > 0.0) {
      r.mean_final_ratio += state.prev_loss / state.initial_loss;
      ++ratio_count;
    }
  }
  r.mean_return /= static_cast<double>(references.size());
  if (ratio_count > 0) r.mean_final_ratio /= ratio_count;
  return r;
}

inline EvalResult evaluate_network(const NetworkParams& net, const std::vector<Canvas>& references,
                                   const TrainConfig& cfg, int steps = 0) {
  ForwardCache<float> cache;
  return evaluate_policy(
      references,
      [&](const Observation& obs, std::mt19937_64&) {
        net.load_input(obs, cache.input);
        net.forward(cache);
        return mean_action(NetworkParams::to_output(cache));
      },
      cfg.loss_kind(), cfg.env, steps > 0 ? steps : cfg.t_max, cfg.blur_sigma, cfg.seed);
}

// Uniformly random actions in [0,1]^6.
inline EvalResult evaluate_random_policy(const std::vector<Canvas>& references, const TrainConfig& cfg,
                                         int steps = 0) {
  return evaluate_policy(
      references,
      [](const Observation&, std::mt19937_64& rng) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        Action a;
        for (int d = 0; d < kActionDim; ++d) a[d] = u(rng);
        return a;
      },
      cfg.loss_kind(), cfg.env, steps > 0 ? steps : cfg.t_max, cfg.blur_sigma, cfg.seed);
}

struct TrainOptions {
  std::string out_dir;                    // empty: keep everything in memory
  std::optional<NetworkParams> init;      // resume from these parameters
  int start_episode = 0;                  // episode numbering offset when resuming
  std::function<void(int episode, const NetworkParams&)> on_episode;
};

struct TrainResult {
  NetworkParams params;
  std::vector<MetricsRow> metrics;
  long env_steps = 0;
  std::vector<long> selection_counts;  // per reference
};

// Canvas produced by a short deterministic policy rollout from a random pen
// position; used as a deviated starting state.
template <class Rng>
Canvas policy_painted_canvas(const Canvas& reference, const Canvas& observation_reference, const NetworkParams& net,
                             const LossKind& loss, const EnvConfig& env, int max_steps, Rng& rng) {
  const PenState start{static_cast<double>(std::uniform_int_distribution<int>(0, reference.width() - 1)(rng)),
                       static_cast<double>(std::uniform_int_distribution<int>(0, reference.height() - 1)(rng))};
  EnvState state = env_reset(reference, std::nullopt, start, loss, env, observation_reference);
  const int steps = std::uniform_int_distribution<int>(1, std::max(1, max_steps))(rng);
  for (int t = 0; t < steps; ++t) {
    env_step(state, mean_action(net.forward(extract_observation(state, env))), loss, env);
  }
  return state.canvas;
}

namespace detail {

inline void write_state_file(const std::string& ckpt_path, int episodes_done) {
  std::ofstream out(ckpt_path + ".state", std::ios::trunc);
  if (!out) throw IoError("cannot write trainer state", ckpt_path + ".state");
  out << "episodes_done = " << episodes_done << "\n";
}

}  // namespace detail

// Reads the episode counter stored next to a checkpoint; 0 when absent.
inline int read_episodes_done(const std::string& ckpt_path) {
  std::ifstream in(ckpt_path + ".state");
  if (!in) return 0;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    if (detail::trim(line.substr(0, eq)) == "episodes_done") {
      return detail::parse_number<int>("episodes_done", detail::trim(line.substr(eq + 1)));
    }
  }
  throw FormatError("trainer state without episodes_done: " + ckpt_path + ".state");
}

// Main loop: schedule threshold, pick the hardest reference, collect
// trajectories on it, estimate advantages, and apply one PPO update.
inline TrainResult train(const TrainConfig& cfg, Dataset& dataset, const TrainOptions& options = {}) {
  cfg.validate();
  if (dataset.size() == 0) throw InvalidArgument("train: empty dataset");
  const LossKind loss = cfg.loss_kind();
  const std::size_t n_refs = cfg.dataset_size > 0 ? std::min<std::size_t>(dataset.size(), cfg.dataset_size)
                                                  : dataset.size();
  std::vector<Canvas> obs_refs;
  for (std::size_t i = 0; i < n_refs; ++i) {
    obs_refs.push_back(cfg.blur_sigma > 0.0 ? gaussian_blur(dataset.patches[i], cfg.blur_sigma)
                                            : dataset.patches[i]);
  }
  if (dataset.height() < 1) throw InvalidArgument("train: empty patches");

  TrainResult result;
  result.params = options.init ? *options.init : init_params<float>(cfg.arch(), cfg.seed);
  if (result.params.arch() != cfg.arch()) {
    throw InvalidArgument("initial parameters do not match the configured network/observation size");
  }
  result.selection_counts.assign(n_refs, 0);
  Adam<float> optimizer(result.params.parameter_count(), cfg.learning_rate);

  std::ofstream metrics;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    const std::string path = options.out_dir + "/metrics.csv";
    const bool append = options.start_episode > 0 && std::filesystem::exists(path);
    metrics.open(path, append ? std::ios::app : std::ios::trunc);
    if (!metrics) throw IoError("cannot open metrics log", path);
    if (!append) metrics << kMetricsHeader << "\n";
  }

  std::mt19937_64 sampler_rng(mix_seed(cfg.seed, 0x5A3B));
  int done = 0;
  for (int k = 0; k < cfg.episodes; ++k) {
    if (cfg.max_env_steps > 0 && result.env_steps >= cfg.max_env_steps) break;
    const int episode = options.start_episode + k;
    // Under a step budget the ramp follows the share of steps consumed.
    const double thresh = cfg.max_env_steps > 0
                              ? thresh_at_progress(static_cast<double>(result.env_steps) / cfg.max_env_steps, cfg)
                              : schedule_thresh(k, cfg);

    std::size_t ref = 0;
    switch (cfg.sampling) {
      case SamplingMode::Value:
        ref = select_reference(dataset, [&](std::size_t i) {
          return i < n_refs ? result.params.forward(reset_observation(obs_refs[i], cfg.env)).value
                            : std::numeric_limits<double>::infinity();
        });
        break;
      case SamplingMode::MeanReward:
        ref = argmin_index(std::span<const double>(dataset.difficulty.data(), n_refs));
        break;
      case SamplingMode::Uniform:
        ref = std::uniform_int_distribution<std::size_t>(0, n_refs - 1)(sampler_rng);
        break;
    }
    ++result.selection_counts[ref];

    const int k_rollouts = cfg.rollouts_per_update;
    std::vector<Trajectory> trajs(static_cast<std::size_t>(k_rollouts));
    auto collect_one = [&](int j) {
      std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(episode) + 1, static_cast<std::uint64_t>(j)));
      EpisodeSetup setup;
      setup.reference = &dataset.patches[ref];
      setup.observation_reference = &obs_refs[ref];
      if (cfg.rollout_init_prob > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < cfg.rollout_init_prob) {
        setup.init_canvas = policy_painted_canvas(dataset.patches[ref], obs_refs[ref], result.params, loss, cfg.env,
                                                  cfg.t_max, rng);
      }
      CollectOptions opt;
      opt.horizon_cap = cfg.t_max;
      if (cfg.curriculum) opt.r_thresh = thresh;
      trajs[static_cast<std::size_t>(j)] = collect_trajectory(setup, result.params, loss, cfg.env, opt, rng);
      trajs[static_cast<std::size_t>(j)].reference_index = ref;
    };
    const int workers = std::min(cfg.workers, k_rollouts);
    if (workers <= 1) {
      for (int j = 0; j < k_rollouts; ++j) collect_one(j);
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          for (int j = w; j < k_rollouts; j += workers) collect_one(j);
        });
      }
      for (auto& t : pool) t.join();
    }

    std::vector<PpoSample> batch;
    double return_sum = 0.0, length_sum = 0.0;
    for (const auto& traj : trajs) {
      const Advantages adv = compute_advantages(traj, cfg.gamma, cfg.lambda);
      for (std::size_t i = 0; i < traj.steps.size(); ++i) {
        PpoSample s;
        s.observation = traj.steps[i].observation;
        s.raw_action = traj.steps[i].raw_action;
        s.old_log_prob = traj.steps[i].log_prob;
        s.advantage = adv.advantages[i];
        s.ret = adv.returns[i];
        batch.push_back(std::move(s));
      }
      return_sum += traj.episode_return;
      length_sum += static_cast<double>(traj.steps.size());
      result.env_steps += static_cast<long>(traj.steps.size());
      dataset.record_return(ref, traj.episode_return);
    }
    std::vector<double> adv(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) adv[i] = batch[i].advantage;
    normalize_advantages(adv);
    for (std::size_t i = 0; i < batch.size(); ++i) batch[i].advantage = adv[i];

    std::mt19937_64 update_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(episode) + 1, 0xC0FFEE));
    const PpoStats stats = ppo_update(result.params, optimizer, batch, cfg, update_rng);

    MetricsRow row;
    row.episode = episode;
    row.mean_reward = return_sum / k_rollouts;
    row.surrogate = stats.surrogate;
    row.value_loss = stats.value_loss;
    row.entropy = stats.entropy;
    row.clip_fraction = stats.clip_fraction;
    row.horizon = length_sum / k_rollouts;
    result.metrics.push_back(row);
    if (metrics.is_open()) metrics << format_metrics_row(row) << "\n";

    if (!options.out_dir.empty() && cfg.checkpoint_every > 0 && (k + 1) % cfg.checkpoint_every == 0) {
      const std::string path = options.out_dir + "/ckpt_" + std::to_string(episode + 1) + ".ckpt";
      save_params(result.params, path);
      detail::write_state_file(path, episode + 1);
    }
    ++done;
    if (options.on_episode) options.on_episode(episode, result.params);
  }
  if (!options.out_dir.empty()) {
    const std::string path = options.out_dir + "/final.ckpt";
    save_params(result.params, path);
    detail::write_state_file(path, options.start_episode + done);
    metrics.flush();
    if (!metrics) throw IoError("metrics log write failed", options.out_dir + "/metrics.csv");
  }
  return result;
}

}  // namespace paintbot
