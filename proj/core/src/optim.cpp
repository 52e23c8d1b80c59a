#include "superdec/optim.hpp"

#include <cmath>

namespace superdec {

template <typename T>
void adam_step(std::vector<Parameter<T>>& params, AdamState<T>& state, const AdamConfig& cfg) {
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            const std::size_t n = static_cast<std::size_t>(params[i].value.numel());
            state.m[i].assign(n, T(0));
            state.v[i].assign(n, T(0));
        }
    }
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw ShapeError("adam_step: state tracks " + std::to_string(state.m.size()) +
                         " parameters, got " + std::to_string(params.size()));

    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        const std::size_t n = static_cast<std::size_t>(p.value.numel());
        if (state.m[i].size() != n)
            throw ShapeError("adam_step: moment size mismatch for '" + p.name + "'");
        auto vals = p.value.values_mut();
        const bool has_grad = p.value.has_grad();
        const std::span<const T> g = has_grad ? p.value.grad() : std::span<const T>{};
        for (std::size_t j = 0; j < n; ++j) {
            const T gj = has_grad ? g[j] : T(0);
            T& m = state.m[i][j];
            T& v = state.v[i][j];
            m = static_cast<T>(cfg.beta1) * m + static_cast<T>(1.0 - cfg.beta1) * gj;
            v = static_cast<T>(cfg.beta2) * v + static_cast<T>(1.0 - cfg.beta2) * gj * gj;
            const double mhat = static_cast<double>(m) / bc1;
            const double vhat = static_cast<double>(v) / bc2;
            vals[j] -= static_cast<T>(cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
        }
    }
}

template void adam_step<float>(std::vector<Parameter<float>>&, AdamState<float>&, const AdamConfig&);
template void adam_step<double>(std::vector<Parameter<double>>&, AdamState<double>&, const AdamConfig&);

} // namespace superdec
