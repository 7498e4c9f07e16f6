#pragma once

// Policy/value network: a shared convolutional trunk feeding a fully connected
// layer, a Gaussian policy head (sigmoid-squashed means plus state-independent
// log standard deviations) and a scalar value head.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "paintbot/env.hpp"
#include "paintbot/error.hpp"
#include "paintbot/nn.hpp"

namespace paintbot {

struct ConvSpec {
  int filters = 0;
  int kernel = 0;
  int stride = 1;
  bool operator==(const ConvSpec&) const = default;
};

struct NetworkArch {
  int obs_h = 41;
  int obs_w = 82;  // full concatenated width
  int obs_c = 3;
  std::vector<ConvSpec> convs;
  int fc_units = 512;

  bool operator==(const NetworkArch&) const = default;

  // 64 8x8/4, 64 4x4/2, 64 3x3/1, FC 512.
  static NetworkArch full(int obs_h = 41, int obs_w = 82) {
    return {obs_h, obs_w, 3, {{64, 8, 4}, {64, 4, 2}, {64, 3, 1}}, 512};
  }
  // Reduced trunk for 21x42 observations on small canvases.
  static NetworkArch desk(int obs_h = 21, int obs_w = 42) {
    return {obs_h, obs_w, 3, {{16, 5, 2}, {32, 3, 2}, {32, 3, 1}}, 128};
  }

  std::vector<nn::ConvShape> conv_shapes() const {
    if (obs_h < 1 || obs_w < 1 || obs_c < 1 || fc_units < 1 || convs.empty()) {
      throw InvalidArgument("network architecture has empty dimensions");
    }
    std::vector<nn::ConvShape> out;
    int c = obs_c, h = obs_h, w = obs_w;
    for (std::size_t i = 0; i < convs.size(); ++i) {
      const auto& spec = convs[i];
      nn::ConvShape s{c, h, w, spec.filters, spec.kernel, spec.kernel, spec.stride};
      if (!s.valid()) {
        throw InvalidArgument("observation " + std::to_string(obs_h) + "x" + std::to_string(obs_w) +
                              " incompatible with conv layer " + std::to_string(i + 1) + " (" +
                              std::to_string(spec.kernel) + "x" + std::to_string(spec.kernel) +
                              " stride " + std::to_string(spec.stride) + " on " +
                              std::to_string(h) + "x" + std::to_string(w) + ")");
      }
      out.push_back(s);
      c = s.out_c;
      h = s.out_h();
      w = s.out_w();
    }
    return out;
  }

  std::size_t flat_size() const { return conv_shapes().back().output_size(); }
};

struct TensorInfo {
  std::string name;
  std::vector<int> dims;
  std::size_t offset = 0;
  std::size_t count = 0;
};

struct PolicyOutput {
  std::array<double, kActionDim> mean{};
  std::array<double, kActionDim> log_std{};
  double value = 0.0;
};

// Upstream gradients of a scalar objective with respect to the network outputs.
template <class T>
struct HeadGradient {
  std::array<T, kActionDim> mean{};
  std::array<T, kActionDim> log_std{};
  T value = 0;
};

inline constexpr double kLogStdMin = -4.605170185988091;  // log 0.01
inline constexpr double kLogStdMax = 0.0;                 // log 1
inline constexpr double kLogStdInit = -1.2039728043259361;  // log 0.3

template <class T>
struct ForwardCache {
  std::vector<T> input;
  std::vector<std::vector<T>> cols;
  std::vector<std::vector<T>> conv_out;  // post-ReLU
  std::vector<T> hidden;                 // post-ReLU fully connected
  std::array<T, kActionDim> mean{};
  std::array<T, kActionDim> log_std{};
  T value = 0;
};

template <class T>
class PolicyNetwork {
 public:
  PolicyNetwork() = default;
  explicit PolicyNetwork(NetworkArch arch) : arch_(std::move(arch)), shapes_(arch_.conv_shapes()) {
    std::size_t offset = 0;
    auto add = [&](std::string name, std::vector<int> dims) {
      std::size_t count = 1;
      for (int d : dims) count *= static_cast<std::size_t>(d);
      tensors_.push_back({std::move(name), std::move(dims), offset, count});
      offset += count;
    };
    for (std::size_t i = 0; i < shapes_.size(); ++i) {
      const auto& s = shapes_[i];
      add("conv" + std::to_string(i + 1) + ".weight", {s.out_c, s.in_c, s.kernel_h, s.kernel_w});
      add("conv" + std::to_string(i + 1) + ".bias", {s.out_c});
    }
    const int flat = static_cast<int>(shapes_.back().output_size());
    add("fc.weight", {arch_.fc_units, flat});
    add("fc.bias", {arch_.fc_units});
    add("policy_mean.weight", {kActionDim, arch_.fc_units});
    add("policy_mean.bias", {kActionDim});
    add("policy_log_std", {kActionDim});
    add("value.weight", {1, arch_.fc_units});
    add("value.bias", {1});
    params_.assign(offset, T(0));
  }

  const NetworkArch& arch() const { return arch_; }
  const std::vector<nn::ConvShape>& conv_shapes() const { return shapes_; }
  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  std::size_t parameter_count() const { return params_.size(); }

  std::span<T> params() { return params_; }
  std::span<const T> params() const { return params_; }

  std::size_t tensor_index(const std::string& name) const {
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      if (tensors_[i].name == name) return i;
    }
    throw InvalidArgument("no parameter tensor named " + name);
  }
  std::span<T> tensor(std::size_t i) { return {params_.data() + tensors_[i].offset, tensors_[i].count}; }
  std::span<const T> tensor(std::size_t i) const {
    return {params_.data() + tensors_[i].offset, tensors_[i].count};
  }
  std::span<T> tensor(const std::string& name) { return tensor(tensor_index(name)); }
  std::span<const T> tensor(const std::string& name) const { return tensor(tensor_index(name)); }

  template <class U>
  PolicyNetwork<U> cast() const {
    PolicyNetwork<U> out(arch_);
    auto dst = out.params();
    for (std::size_t i = 0; i < params_.size(); ++i) dst[i] = static_cast<U>(params_[i]);
    return out;
  }

  void clamp_log_std() {
    for (auto& v : tensor(log_std_index())) {
      v = std::clamp(v, static_cast<T>(kLogStdMin), static_cast<T>(kLogStdMax));
    }
  }

  void check_observation(const Observation& obs) const {
    if (obs.height != arch_.obs_h || obs.width != arch_.obs_w ||
        obs.values.size() != static_cast<std::size_t>(obs.height) * obs.width * 3) {
      throw InvalidArgument("observation " + std::to_string(obs.height) + "x" +
                            std::to_string(obs.width) + " (" + std::to_string(obs.values.size()) +
                            " values) does not match network input " +
                            std::to_string(arch_.obs_h) + "x" + std::to_string(arch_.obs_w));
    }
  }

  // HWC intensities in [0,1] to centered CHW network input.
  void load_input(const Observation& obs, std::vector<T>& input) const {
    check_observation(obs);
    const std::size_t plane = static_cast<std::size_t>(obs.height) * obs.width;
    input.resize(plane * 3);
    for (std::size_t i = 0; i < plane; ++i) {
      for (int c = 0; c < 3; ++c) input[c * plane + i] = static_cast<T>(obs.values[i * 3 + c] - 0.5);
    }
  }

  // Forward pass from cache.input; fills every intermediate needed by backward.
  void forward(ForwardCache<T>& cache) const {
    cache.cols.resize(shapes_.size());
    cache.conv_out.resize(shapes_.size());
    std::span<const T> current = cache.input;
    for (std::size_t i = 0; i < shapes_.size(); ++i) {
      const auto& s = shapes_[i];
      cache.cols[i].resize(s.patch_size() * s.positions());
      nn::im2col<T>(s, current, cache.cols[i]);
      cache.conv_out[i].resize(s.output_size());
      nn::conv_forward<T>(s, tensor(2 * i), tensor(2 * i + 1), cache.cols[i], cache.conv_out[i]);
      nn::relu_forward<T>(cache.conv_out[i]);
      current = cache.conv_out[i];
    }
    const std::size_t fc = fc_index();
    cache.hidden.resize(static_cast<std::size_t>(arch_.fc_units));
    nn::dense_forward<T>(tensor(fc), tensor(fc + 1), current, cache.hidden);
    nn::relu_forward<T>(cache.hidden);
    std::array<T, kActionDim> logits{};
    nn::dense_forward<T>(tensor(fc + 2), tensor(fc + 3), cache.hidden, logits);
    for (int d = 0; d < kActionDim; ++d) cache.mean[d] = nn::sigmoid(logits[d]);
    auto ls = tensor(log_std_index());
    std::copy(ls.begin(), ls.end(), cache.log_std.begin());
    std::array<T, 1> v{};
    nn::dense_forward<T>(tensor(fc + 5), tensor(fc + 6), cache.hidden, v);
    cache.value = v[0];
  }

  PolicyOutput forward(const Observation& obs) const {
    ForwardCache<T> cache;
    load_input(obs, cache.input);
    forward(cache);
    return to_output(cache);
  }

  static PolicyOutput to_output(const ForwardCache<T>& cache) {
    PolicyOutput out;
    for (int d = 0; d < kActionDim; ++d) {
      out.mean[d] = static_cast<double>(cache.mean[d]);
      out.log_std[d] = static_cast<double>(cache.log_std[d]);
    }
    out.value = static_cast<double>(cache.value);
    return out;
  }

  // Accumulates d objective / d params into `grads` (same layout as params()).
  void backward(const ForwardCache<T>& cache, const HeadGradient<T>& head, std::span<T> grads) const {
    if (grads.size() != params_.size()) throw InvalidArgument("gradient buffer size mismatch");
    auto gtensor = [&](std::size_t i) {
      return std::span<T>(grads.data() + tensors_[i].offset, tensors_[i].count);
    };
    const std::size_t fc = fc_index();
    std::array<T, kActionDim> dlogits{};
    for (int d = 0; d < kActionDim; ++d) {
      dlogits[d] = head.mean[d] * cache.mean[d] * (T(1) - cache.mean[d]);
    }
    std::vector<T> dhidden(cache.hidden.size(), T(0));
    std::vector<T> tmp(cache.hidden.size(), T(0));
    nn::dense_backward<T>(tensor(fc + 2), cache.hidden, dlogits, gtensor(fc + 2), gtensor(fc + 3), dhidden);
    const std::array<T, 1> dv{head.value};
    nn::dense_backward<T>(tensor(fc + 5), cache.hidden, dv, gtensor(fc + 5), gtensor(fc + 6), tmp);
    for (std::size_t i = 0; i < dhidden.size(); ++i) dhidden[i] += tmp[i];
    auto gls = gtensor(log_std_index());
    for (int d = 0; d < kActionDim; ++d) gls[d] += head.log_std[d];
    nn::relu_backward<T>(cache.hidden, dhidden);

    std::vector<T> dflat(cache.conv_out.back().size(), T(0));
    nn::dense_backward<T>(tensor(fc), cache.conv_out.back(), dhidden, gtensor(fc), gtensor(fc + 1), dflat);

    std::vector<T> dout = std::move(dflat);
    std::vector<T> dcols;
    for (std::size_t li = shapes_.size(); li-- > 0;) {
      const auto& s = shapes_[li];
      nn::relu_backward<T>(cache.conv_out[li], dout);
      const bool need_input = li > 0;
      if (need_input) dcols.assign(s.patch_size() * s.positions(), T(0));
      nn::conv_backward<T>(s, tensor(2 * li), cache.cols[li], dout, gtensor(2 * li),
                           gtensor(2 * li + 1), need_input ? std::span<T>(dcols) : std::span<T>());
      if (!need_input) break;
      std::vector<T> din(s.input_size(), T(0));
      nn::col2im<T>(s, dcols, din);
      dout = std::move(din);
    }
  }

  std::size_t fc_index() const { return 2 * shapes_.size(); }
  std::size_t log_std_index() const { return fc_index() + 4; }

 private:
  NetworkArch arch_;
  std::vector<nn::ConvShape> shapes_;
  std::vector<TensorInfo> tensors_;
  std::vector<T> params_;
};

using NetworkParams = PolicyNetwork<float>;

// Deterministic fan-in scaled uniform initialization. Trunk layers use the
// rectifier bound sqrt(6 / fan_in); the heads start small so initial means sit
// near 0.5 and initial values near 0.
template <class T = float>
PolicyNetwork<T> init_params(const NetworkArch& arch, std::uint64_t seed) {
  PolicyNetwork<T> net(arch);
  std::mt19937_64 rng(seed);
  const std::size_t fc = net.fc_index();
  for (std::size_t i = 0; i < net.tensors().size(); ++i) {
    const auto& info = net.tensors()[i];
    auto values = net.tensor(i);
    if (i == net.log_std_index()) {
      std::fill(values.begin(), values.end(), static_cast<T>(kLogStdInit));
      continue;
    }
    if (info.dims.size() == 1) continue;  // biases start at zero
    std::size_t fan_in = 1;
    for (std::size_t d = 1; d < info.dims.size(); ++d) fan_in *= static_cast<std::size_t>(info.dims[d]);
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    if (i == fc + 2) bound *= 0.01;
    if (i == fc + 5) bound *= 0.1;
    std::uniform_real_distribution<double> uniform(-bound, bound);
    for (auto& v : values) v = static_cast<T>(uniform(rng));
  }
  return net;
}

inline NetworkParams init_params(int obs_h, int obs_w, std::uint64_t seed) {
  return init_params<float>(NetworkArch::full(obs_h, obs_w), seed);
}

template <class T>
T gaussian_log_prob(const std::array<T, kActionDim>& mean, const std::array<T, kActionDim>& log_std,
                    const std::array<T, kActionDim>& sample) {
  const T half_log_two_pi = static_cast<T>(0.5 * std::log(2.0 * std::numbers::pi));
  T lp = 0;
  for (int d = 0; d < kActionDim; ++d) {
    const T z = (sample[d] - mean[d]) * std::exp(-log_std[d]);
    lp += -T(0.5) * z * z - log_std[d] - half_log_two_pi;
  }
  return lp;
}

template <class T>
T gaussian_entropy(const std::array<T, kActionDim>& log_std) {
  const T per_dim = static_cast<T>(0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e));
  T h = 0;
  for (int d = 0; d < kActionDim; ++d) h += log_std[d] + per_dim;
  return h;
}

struct SampledAction {
  Action action;                            // clipped to [0,1], executed
  std::array<double, kActionDim> raw{};     // pre-clip Gaussian sample
  double log_prob = 0.0;                    // density of the pre-clip sample
};

template <class Rng>
SampledAction sample_action(const PolicyOutput& out, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  SampledAction s;
  for (int d = 0; d < kActionDim; ++d) {
    s.raw[d] = out.mean[d] + std::exp(out.log_std[d]) * normal(rng);
    s.action[d] = std::clamp(s.raw[d], 0.0, 1.0);
  }
  s.log_prob = gaussian_log_prob(out.mean, out.log_std, s.raw);
  return s;
}

inline Action mean_action(const PolicyOutput& out) {
  Action a;
  for (int d = 0; d < kActionDim; ++d) a[d] = std::clamp(out.mean[d], 0.0, 1.0);
  return a;
}

// Checkpoint layout (all integers little-endian uint32):
//   "PBOT" | version | obs_h obs_w obs_c | n_conv | n_conv x (filters kernel stride)
//   | fc_units | n_tensors | n_tensors x (rank dims...) | float32 LE parameters
inline constexpr char kCheckpointMagic[4] = {'P', 'B', 'O', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::vector<char>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class ByteReader {
 public:
  ByteReader(const std::vector<char>& bytes, std::string path) : bytes_(bytes), path_(std::move(path)) {}
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) {
    const std::uint32_t bits = u32(what);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  void need(std::size_t n, const char* what) const {
    if (pos_ + n > bytes_.size()) {
      throw FormatError("checkpoint truncated while reading " + std::string(what) + " at byte " +
                        std::to_string(pos_) + ": " + path_);
    }
  }
  std::size_t pos() const { return pos_; }
  std::size_t size() const { return bytes_.size(); }
  const char* at(std::size_t i) const { return bytes_.data() + i; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  const std::vector<char>& bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for reading", path);
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open file for writing", path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed", path);
}

}  // namespace detail

template <class T>
std::vector<char> serialize_params(const PolicyNetwork<T>& net) {
  std::vector<char> buf(kCheckpointMagic, kCheckpointMagic + 4);
  const auto& a = net.arch();
  detail::put_u32(buf, kCheckpointVersion);
  detail::put_u32(buf, static_cast<std::uint32_t>(a.obs_h));
  detail::put_u32(buf, static_cast<std::uint32_t>(a.obs_w));
  detail::put_u32(buf, static_cast<std::uint32_t>(a.obs_c));
  detail::put_u32(buf, static_cast<std::uint32_t>(a.convs.size()));
  for (const auto& c : a.convs) {
    detail::put_u32(buf, static_cast<std::uint32_t>(c.filters));
    detail::put_u32(buf, static_cast<std::uint32_t>(c.kernel));
    detail::put_u32(buf, static_cast<std::uint32_t>(c.stride));
  }
  detail::put_u32(buf, static_cast<std::uint32_t>(a.fc_units));
  detail::put_u32(buf, static_cast<std::uint32_t>(net.tensors().size()));
  for (const auto& t : net.tensors()) {
    detail::put_u32(buf, static_cast<std::uint32_t>(t.dims.size()));
    for (int d : t.dims) detail::put_u32(buf, static_cast<std::uint32_t>(d));
  }
  for (T v : net.params()) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    detail::put_u32(buf, bits);
  }
  return buf;
}

template <class T>
void save_params(const PolicyNetwork<T>& net, const std::string& path) {
  detail::write_file(path, serialize_params(net));
}

inline NetworkParams deserialize_params(const std::vector<char>& bytes, const std::string& path) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError("not a checkpoint (bad magic, expected \"PBOT\"): " + path);
  }
  detail::ByteReader in(bytes, path);
  in.skip(4);
  const std::uint32_t version = in.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + "): " + path);
  }
  NetworkArch arch;
  arch.obs_h = static_cast<int>(in.u32("obs_h"));
  arch.obs_w = static_cast<int>(in.u32("obs_w"));
  arch.obs_c = static_cast<int>(in.u32("obs_c"));
  const std::uint32_t n_conv = in.u32("conv count");
  if (n_conv == 0 || n_conv > 64) throw FormatError("implausible conv layer count in " + path);
  arch.convs.clear();
  for (std::uint32_t i = 0; i < n_conv; ++i) {
    ConvSpec c;
    c.filters = static_cast<int>(in.u32("conv filters"));
    c.kernel = static_cast<int>(in.u32("conv kernel"));
    c.stride = static_cast<int>(in.u32("conv stride"));
    arch.convs.push_back(c);
  }
  arch.fc_units = static_cast<int>(in.u32("fc units"));
  if (arch.obs_c != 3) throw FormatError("checkpoint expects " + std::to_string(arch.obs_c) + " channels: " + path);
  NetworkParams net;
  try {
    net = NetworkParams(arch);
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("checkpoint describes an invalid network (") + e.what() + "): " + path);
  }
  const std::uint32_t n_tensors = in.u32("tensor count");
  if (n_tensors != net.tensors().size()) {
    throw FormatError("checkpoint tensor table has " + std::to_string(n_tensors) + " entries, expected " +
                      std::to_string(net.tensors().size()) + ": " + path);
  }
  for (const auto& t : net.tensors()) {
    const std::uint32_t rank = in.u32("tensor rank");
    if (rank != t.dims.size()) throw FormatError("tensor rank mismatch for " + t.name + ": " + path);
    for (int d : t.dims) {
      if (in.u32("tensor dim") != static_cast<std::uint32_t>(d)) {
        throw FormatError("tensor shape mismatch for " + t.name + ": " + path);
      }
    }
  }
  const std::size_t expected = net.parameter_count() * 4;
  if (in.size() - in.pos() < expected) {
    throw FormatError("checkpoint truncated: expected " + std::to_string(expected) +
                      " parameter bytes, found " + std::to_string(in.size() - in.pos()) + ": " + path);
  }
  if (in.size() - in.pos() > expected) throw FormatError("trailing bytes after parameters: " + path);
  for (auto& v : net.params()) v = in.f32("parameters");
  return net;
}

inline NetworkParams load_params(const std::string& path) {
  return deserialize_params(detail::read_file(path), path);
}

}  // namespace paintbot
