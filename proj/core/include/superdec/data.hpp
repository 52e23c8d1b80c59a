#pragma once

#include <vector>

#include "superdec/tensor.hpp"

namespace superdec {

enum class TaskKind { thin_lines, denoise };

struct DatasetSpec {
    TaskKind task = TaskKind::thin_lines;
    int count = 500;
    int test_count = 100;
    int size = 64;  // power of two
    std::uint64_t seed = 0;
    // thin_lines
    int min_width = 1;
    int max_width = 4;
    int max_lines = 3;
    double texture_amplitude = 0.15;
    // denoise
    double noise_sigma = 0.1;
};

// One example. thin_lines: input image in [0,1], binary mask target, stroke
// width and total centerline length labels. denoise: noisy input, clean
// target, width 0.
template <typename T>
struct Sample {
    Tensor<T> input;   // [1,1,S,S]
    Tensor<T> target;  // [1,1,S,S]
    int width_px = 0;
    double stroke_length_px = 0;
};

// Low-amplitude smooth sinusoid background plus 1..max_lines dark
// anti-aliased polyline strokes, all of one integer nominal width per image.
// The mask marks pixels within width/2 of a stroke centerline.
// Deterministic per (spec, seed, index).
template <typename T>
std::vector<Sample<T>> gen_thin_lines(const DatasetSpec& spec, std::uint64_t seed, int count);

// Clean images are low-pass filtered noise (LL-dominant by construction);
// noisy adds Gaussian(0, sigma) clamped to [0,1].
template <typename T>
std::vector<Sample<T>> gen_denoise(const DatasetSpec& spec, std::uint64_t seed, int count);

template <typename T>
std::vector<Sample<T>> generate_dataset(const DatasetSpec& spec, std::uint64_t seed, int count);

} // namespace superdec
