#pragma once

#include <vector>

#include "superdec/tensor.hpp"

namespace superdec {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct AdamState {
    std::int64_t step = 0;
    std::vector<std::vector<T>> m;  // first moment, parallel to the param list
    std::vector<std::vector<T>> v;  // second moment
};

// One bias-corrected Adam update over the parameter list, reading each
// parameter's accumulated gradient (missing gradient counts as zero).
// Deterministic: fixed traversal order, no reductions.
template <typename T>
void adam_step(std::vector<Parameter<T>>& params, AdamState<T>& state, const AdamConfig& cfg);

} // namespace superdec
