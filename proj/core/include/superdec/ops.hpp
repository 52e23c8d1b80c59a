#pragma once

#include <optional>
#include <vector>

#include "superdec/tensor.hpp"

namespace superdec {

enum class EwKind { add, sub, mul, relu, sigmoid };
enum class PoolKind { global_avg, global_max, spatial_mean_over_channels, spatial_max_over_channels };
enum class UpsampleMode { nearest, bilinear };

// All ops record into the reverse-mode graph when any input requires grad.
// Binary elementwise kinds accept identical shapes, or a one-element tensor
// broadcast against a full tensor; nothing else broadcasts.

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);

template <typename T>
Tensor<T> elementwise(EwKind kind, const Tensor<T>& a, const Tensor<T>* b = nullptr);

// Cross-correlation (no kernel flip). weight is [Cout,Cin,kh,kw] with odd
// kh/kw; bias, when defined, is [1,Cout,1,1].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride = 1, int padding = 0);

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts);

template <typename T>
std::vector<Tensor<T>> chunk_channels(const Tensor<T>& x, int n);

// Global kinds return [B,C,1,1]; spatial kinds return [B,1,H,W]. Max kinds
// route the gradient to the first maximum in scan order.
template <typename T>
Tensor<T> pool(PoolKind kind, const Tensor<T>& x);

// 2x2 stride-2 average pool; requires even H and W.
template <typename T>
Tensor<T> avg_pool2x2(const Tensor<T>& x);

// Factor-2 upsampling. Bilinear uses the align-corners=false convention.
template <typename T>
Tensor<T> upsample(const Tensor<T>& x, UpsampleMode mode, int factor = 2);

// Explicit broadcast multiplies used by attention gates (no silent
// broadcasting anywhere else): gate shapes [B,C,1,1] and [B,1,H,W].
template <typename T> Tensor<T> scale_channels(const Tensor<T>& x, const Tensor<T>& gate);
template <typename T> Tensor<T> scale_spatial(const Tensor<T>& x, const Tensor<T>& gate);

template <typename T> Tensor<T> sum_all(const Tensor<T>& x);
template <typename T> Tensor<T> mean_all(const Tensor<T>& x);

// Numerically stable mean binary cross-entropy from logits:
// mean(max(z,0) - z*t + log(1 + exp(-|z|))).
template <typename T>
Tensor<T> bce_with_logits_mean(const Tensor<T>& logits, const Tensor<T>& targets);

template <typename T>
Tensor<T> mse_mean(const Tensor<T>& pred, const Tensor<T>& target);

} // namespace superdec
