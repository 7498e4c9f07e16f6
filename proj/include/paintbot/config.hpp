#pragma once

// Training hyperparameters and the plain-text `key = value` config format.

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "paintbot/env.hpp"
#include "paintbot/error.hpp"
#include "paintbot/losses.hpp"
#include "paintbot/policy.hpp"

namespace paintbot {

enum class SamplingMode { Value, MeanReward, Uniform };

inline SamplingMode parse_sampling_mode(const std::string& s) {
  if (s == "value") return SamplingMode::Value;
  if (s == "mean_reward") return SamplingMode::MeanReward;
  if (s == "uniform") return SamplingMode::Uniform;
  throw InvalidArgument("unknown sampling mode '" + s + "' (expected value, mean_reward or uniform)");
}

inline std::string to_string(SamplingMode m) {
  switch (m) {
    case SamplingMode::Value: return "value";
    case SamplingMode::MeanReward: return "mean_reward";
    case SamplingMode::Uniform: return "uniform";
  }
  return "?";
}

struct TrainConfig {
  // PPO
  double gamma = 0.95;
  double lambda = 0.9;
  double clip_eps = 0.2;
  int epochs = 4;
  int minibatch_size = 64;
  double learning_rate = 3e-4;
  double entropy_coef = 1e-3;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;

  // schedule
  int episodes = 1000;            // N: training iterations
  long max_env_steps = 0;         // stop once this many env steps were taken, 0 = no cap
  int dataset_size = 0;           // n: references considered per selection, 0 = all
  int rollouts_per_update = 1;    // trajectories collected on the selected reference
  bool curriculum = true;
  double thresh_start = 0.05;
  double thresh_max = 1.0;
  double thresh_ramp_fraction = 0.5;  // share of episodes over which the threshold ramps
  int t_max = 10;

  // references and reward
  double blur_sigma = 0.0;  // blur of the reference shown to the policy
  std::string loss = "l2";
  std::uint64_t feature_seed = 7;
  SamplingMode sampling = SamplingMode::Value;
  double rollout_init_prob = 0.0;  // chance to start from a policy-painted canvas

  // environment and network
  EnvConfig env{16.0, 12.0, 0.5, 1.0, 21, 21, 1.0};
  std::string network = "desk";

  std::uint64_t seed = 0;
  int checkpoint_every = 0;
  int workers = 1;

  void validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must lie in [0,1]");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidArgument("lambda must lie in [0,1]");
    if (!(clip_eps > 0.0)) throw InvalidArgument("clip_eps must be positive");
    if (epochs < 1 || minibatch_size < 1) throw InvalidArgument("epochs and minibatch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
    if (episodes < 1) throw InvalidArgument("episodes (N) must be >= 1");
    if (max_env_steps < 0) throw InvalidArgument("max_env_steps must be >= 0");
    if (dataset_size < 0) throw InvalidArgument("dataset_size (n) must be >= 0");
    if (rollouts_per_update < 1) throw InvalidArgument("rollouts_per_update must be >= 1");
    if (t_max < 1) throw InvalidArgument("t_max must be >= 1");
    if (thresh_max < thresh_start) throw InvalidArgument("thresh_max must be >= thresh_start");
    if (!(thresh_ramp_fraction > 0.0 && thresh_ramp_fraction <= 1.0)) {
      throw InvalidArgument("thresh_ramp_fraction must lie in (0,1]");
    }
    if (blur_sigma < 0.0) throw InvalidArgument("blur_sigma must be non-negative");
    if (!(rollout_init_prob >= 0.0 && rollout_init_prob <= 1.0)) {
      throw InvalidArgument("rollout_init_prob must lie in [0,1]");
    }
    if (workers < 1) throw InvalidArgument("workers must be >= 1");
    parse_loss_type(loss);
    env.validate();
    arch().conv_shapes();
  }

  NetworkArch arch() const {
    const int h = env.obs_h;
    const int w = 2 * env.obs_w;
    if (network == "desk") return NetworkArch::desk(h, w);
    if (network == "full") return NetworkArch::full(h, w);
    throw InvalidArgument("unknown network preset '" + network + "' (expected desk or full)");
  }

  LossKind loss_kind() const { return LossKind::from_name(loss, feature_seed); }
};

class ConfigKeyError : public InvalidArgument {
 public:
  ConfigKeyError(const std::string& key, const std::string& what)
      : InvalidArgument(what), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

namespace detail {

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T value{};
  in >> value;
  if (!in || !(in >> std::ws).eof()) throw ConfigKeyError(key, "config key '" + key + "': cannot parse '" + text + "'");
  return value;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigKeyError(key, "config key '" + key + "': expected true/false, got '" + text + "'");
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

using Setter = std::function<void(TrainConfig&, const std::string&, const std::string&)>;

inline const std::map<std::string, Setter>& config_setters() {
  static const std::map<std::string, Setter> setters = [] {
    std::map<std::string, Setter> m;
    auto dbl = [&](const char* name, double TrainConfig::*field) {
      m[name] = [field](TrainConfig& c, const std::string& k, const std::string& v) { c.*field = parse_number<double>(k, v); };
    };
    auto integer = [&](const char* name, int TrainConfig::*field) {
      m[name] = [field](TrainConfig& c, const std::string& k, const std::string& v) { c.*field = parse_number<int>(k, v); };
    };
    auto env_dbl = [&](const char* name, double EnvConfig::*field) {
      m[name] = [field](TrainConfig& c, const std::string& k, const std::string& v) { c.env.*field = parse_number<double>(k, v); };
    };
    auto env_int = [&](const char* name, int EnvConfig::*field) {
      m[name] = [field](TrainConfig& c, const std::string& k, const std::string& v) { c.env.*field = parse_number<int>(k, v); };
    };
    dbl("gamma", &TrainConfig::gamma);
    dbl("lambda", &TrainConfig::lambda);
    dbl("clip_eps", &TrainConfig::clip_eps);
    integer("epochs", &TrainConfig::epochs);
    integer("minibatch_size", &TrainConfig::minibatch_size);
    dbl("learning_rate", &TrainConfig::learning_rate);
    dbl("entropy_coef", &TrainConfig::entropy_coef);
    dbl("value_coef", &TrainConfig::value_coef);
    dbl("max_grad_norm", &TrainConfig::max_grad_norm);
    integer("episodes", &TrainConfig::episodes);
    integer("dataset_size", &TrainConfig::dataset_size);
    m["max_env_steps"] = [](TrainConfig& c, const std::string& k, const std::string& v) { c.max_env_steps = parse_number<long>(k, v); };
    integer("rollouts_per_update", &TrainConfig::rollouts_per_update);
    m["curriculum"] = [](TrainConfig& c, const std::string& k, const std::string& v) { c.curriculum = parse_bool(k, v); };
    dbl("thresh_start", &TrainConfig::thresh_start);
    dbl("thresh_max", &TrainConfig::thresh_max);
    dbl("thresh_ramp_fraction", &TrainConfig::thresh_ramp_fraction);
    integer("t_max", &TrainConfig::t_max);
    dbl("blur_sigma", &TrainConfig::blur_sigma);
    m["loss"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      try {
        parse_loss_type(v);
      } catch (const InvalidArgument& e) {
        throw ConfigKeyError(k, "config key '" + k + "': " + e.what());
      }
      c.loss = v;
    };
    m["feature_seed"] = [](TrainConfig& c, const std::string& k, const std::string& v) { c.feature_seed = parse_number<std::uint64_t>(k, v); };
    m["sampling"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      try {
        c.sampling = parse_sampling_mode(v);
      } catch (const InvalidArgument& e) {
        throw ConfigKeyError(k, "config key '" + k + "': " + e.what());
      }
    };
    dbl("rollout_init_prob", &TrainConfig::rollout_init_prob);
    env_dbl("l_max", &EnvConfig::l_max);
    env_dbl("w_max", &EnvConfig::w_max);
    env_dbl("w_eps", &EnvConfig::w_eps);
    env_dbl("beta", &EnvConfig::beta);
    env_int("obs_h", &EnvConfig::obs_h);
    env_int("obs_w", &EnvConfig::obs_w);
    env_dbl("pad_value", &EnvConfig::pad_value);
    m["network"] = [](TrainConfig& c, const std::string&, const std::string& v) { c.network = v; };
    m["seed"] = [](TrainConfig& c, const std::string& k, const std::string& v) { c.seed = parse_number<std::uint64_t>(k, v); };
    integer("checkpoint_every", &TrainConfig::checkpoint_every);
    integer("workers", &TrainConfig::workers);
    return m;
  }();
  return setters;
}

}  // namespace detail

// Applies `key = value` lines on top of `base`. Blank lines and text after '#'
// are ignored; unknown keys and unparsable values throw ConfigKeyError.
inline TrainConfig parse_config(std::istream& in, TrainConfig base = {}) {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigKeyError(line, "config line " + std::to_string(line_no) + ": expected key = value, got '" + line + "'");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const auto& setters = detail::config_setters();
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigKeyError(key, "unknown config key '" + key + "'");
    it->second(base, key, value);
  }
  return base;
}

inline TrainConfig load_config(const std::string& path, TrainConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config", path);
  return parse_config(in, std::move(base));
}

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : detail::config_setters()) keys.push_back(k);
  return keys;
}

}  // namespace paintbot
