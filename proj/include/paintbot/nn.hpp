#pragma once

// Layer primitives shared by the policy network and the perceptual feature
// stack. Activations are single samples in CHW layout; convolutions lower to
// an im2col matrix product so forward and backward share one code path.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "paintbot/error.hpp"

namespace paintbot::nn {

struct ConvShape {
  int in_c = 0;
  int in_h = 0;
  int in_w = 0;
  int out_c = 0;
  int kernel_h = 0;
  int kernel_w = 0;
  int stride = 1;

  int out_h() const { return (in_h - kernel_h) / stride + 1; }
  int out_w() const { return (in_w - kernel_w) / stride + 1; }
  bool valid() const {
    return in_c > 0 && out_c > 0 && kernel_h > 0 && kernel_w > 0 && stride > 0 &&
           in_h >= kernel_h && in_w >= kernel_w;
  }
  // Rows of the im2col matrix.
  std::size_t patch_size() const { return static_cast<std::size_t>(in_c) * kernel_h * kernel_w; }
  // Columns of the im2col matrix.
  std::size_t positions() const { return static_cast<std::size_t>(out_h()) * out_w(); }
  std::size_t weight_count() const { return static_cast<std::size_t>(out_c) * patch_size(); }
  std::size_t input_size() const { return static_cast<std::size_t>(in_c) * in_h * in_w; }
  std::size_t output_size() const { return static_cast<std::size_t>(out_c) * positions(); }

  std::string describe() const {
    return std::to_string(in_h) + "x" + std::to_string(in_w) + "x" + std::to_string(in_c) +
           " -> " + std::to_string(out_h()) + "x" + std::to_string(out_w()) + "x" +
           std::to_string(out_c);
  }
};

template <class T>
void im2col(const ConvShape& s, std::span<const T> input, std::span<T> cols) {
  const int oh = s.out_h();
  const int ow = s.out_w();
  const std::size_t p = s.positions();
  std::size_t row = 0;
  for (int c = 0; c < s.in_c; ++c) {
    for (int ky = 0; ky < s.kernel_h; ++ky) {
      for (int kx = 0; kx < s.kernel_w; ++kx, ++row) {
        T* dst = cols.data() + row * p;
        for (int oy = 0; oy < oh; ++oy) {
          const T* src = input.data() + (static_cast<std::size_t>(c) * s.in_h + oy * s.stride + ky) * s.in_w + kx;
          for (int ox = 0; ox < ow; ++ox) dst[oy * ow + ox] = src[ox * s.stride];
        }
      }
    }
  }
}

// Scatter-add of an im2col-shaped gradient back to the input layout.
template <class T>
void col2im(const ConvShape& s, std::span<const T> cols, std::span<T> input_grad) {
  std::fill(input_grad.begin(), input_grad.end(), T(0));
  const int oh = s.out_h();
  const int ow = s.out_w();
  const std::size_t p = s.positions();
  std::size_t row = 0;
  for (int c = 0; c < s.in_c; ++c) {
    for (int ky = 0; ky < s.kernel_h; ++ky) {
      for (int kx = 0; kx < s.kernel_w; ++kx, ++row) {
        const T* src = cols.data() + row * p;
        for (int oy = 0; oy < oh; ++oy) {
          T* dst = input_grad.data() + (static_cast<std::size_t>(c) * s.in_h + oy * s.stride + ky) * s.in_w + kx;
          for (int ox = 0; ox < ow; ++ox) dst[ox * s.stride] += src[oy * ow + ox];
        }
      }
    }
  }
}

// out[o][p] = bias[o] + sum_k weight[o][k] * cols[k][p]
template <class T>
void conv_forward(const ConvShape& s, std::span<const T> weight, std::span<const T> bias,
                  std::span<const T> cols, std::span<T> out) {
  const std::size_t k_count = s.patch_size();
  const std::size_t p = s.positions();
  for (int o = 0; o < s.out_c; ++o) {
    T* dst = out.data() + o * p;
    std::fill(dst, dst + p, bias[o]);
    const T* w = weight.data() + o * k_count;
    for (std::size_t k = 0; k < k_count; ++k) {
      const T wk = w[k];
      const T* src = cols.data() + k * p;
      for (std::size_t j = 0; j < p; ++j) dst[j] += wk * src[j];
    }
  }
}

// Accumulates weight/bias gradients. When input_grad_cols is non-empty it
// receives W^T * out_grad (im2col layout, overwritten).
template <class T>
void conv_backward(const ConvShape& s, std::span<const T> weight, std::span<const T> cols,
                   std::span<const T> out_grad, std::span<T> weight_grad, std::span<T> bias_grad,
                   std::span<T> input_grad_cols) {
  const std::size_t k_count = s.patch_size();
  const std::size_t p = s.positions();
  for (int o = 0; o < s.out_c; ++o) {
    const T* g = out_grad.data() + o * p;
    T bsum = 0;
    for (std::size_t j = 0; j < p; ++j) bsum += g[j];
    bias_grad[o] += bsum;
    T* wg = weight_grad.data() + o * k_count;
    for (std::size_t k = 0; k < k_count; ++k) {
      const T* src = cols.data() + k * p;
      T acc = 0;
      for (std::size_t j = 0; j < p; ++j) acc += g[j] * src[j];
      wg[k] += acc;
    }
  }
  if (input_grad_cols.empty()) return;
  std::fill(input_grad_cols.begin(), input_grad_cols.end(), T(0));
  for (int o = 0; o < s.out_c; ++o) {
    const T* g = out_grad.data() + o * p;
    const T* w = weight.data() + o * k_count;
    for (std::size_t k = 0; k < k_count; ++k) {
      const T wk = w[k];
      T* dst = input_grad_cols.data() + k * p;
      for (std::size_t j = 0; j < p; ++j) dst[j] += wk * g[j];
    }
  }
}

// out = W * in + b with W stored row-major (out_n x in_n).
template <class T>
void dense_forward(std::span<const T> weight, std::span<const T> bias, std::span<const T> in,
                   std::span<T> out) {
  const std::size_t in_n = in.size();
  for (std::size_t o = 0; o < out.size(); ++o) {
    const T* w = weight.data() + o * in_n;
    T acc = bias[o];
    for (std::size_t i = 0; i < in_n; ++i) acc += w[i] * in[i];
    out[o] = acc;
  }
}

// Accumulates dW += g x^T, db += g; overwrites in_grad with W^T g when non-empty.
template <class T>
void dense_backward(std::span<const T> weight, std::span<const T> in, std::span<const T> out_grad,
                    std::span<T> weight_grad, std::span<T> bias_grad, std::span<T> in_grad) {
  const std::size_t in_n = in.size();
  if (!in_grad.empty()) std::fill(in_grad.begin(), in_grad.end(), T(0));
  for (std::size_t o = 0; o < out_grad.size(); ++o) {
    const T g = out_grad[o];
    bias_grad[o] += g;
    if (g == T(0)) continue;
    T* wg = weight_grad.data() + o * in_n;
    for (std::size_t i = 0; i < in_n; ++i) wg[i] += g * in[i];
    if (!in_grad.empty()) {
      const T* w = weight.data() + o * in_n;
      for (std::size_t i = 0; i < in_n; ++i) in_grad[i] += g * w[i];
    }
  }
}

template <class T>
void relu_forward(std::span<T> values) {
  for (auto& v : values) v = v > T(0) ? v : T(0);
}

// grad *= 1[activation > 0], where activation is the post-ReLU value.
template <class T>
void relu_backward(std::span<const T> activation, std::span<T> grad) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(activation[i] > T(0))) grad[i] = T(0);
  }
}

template <class T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace paintbot::nn
