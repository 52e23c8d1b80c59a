#pragma once

#include <filesystem>

#include "superdec/blocks.hpp"

namespace superdec {

// Golden tensor file, bit-exact: magic "SUPT", u8 version=1, u8 dtype
// (0=f32, 1=f64), four u32 little-endian dims [B,C,H,W], then raw
// little-endian scalars in row-major order.

template <typename T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& t);

// Fails on wrong magic/version, dtype mismatch with T, or truncated payload.
template <typename T>
Tensor<T> load_tensor(const std::filesystem::path& path);

// Checkpoint = directory of golden tensors named by parameter path plus a
// manifest.json carrying {model spec, seed, dtype, parameter list}.
template <typename T>
void save_checkpoint(const std::filesystem::path& dir, const Model<T>& model);

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& dir);

} // namespace superdec
