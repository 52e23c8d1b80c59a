#include "superdec/train.hpp"

#include <algorithm>
#include <cmath>

#include "superdec/analysis.hpp"
#include "superdec/ops.hpp"

namespace superdec {
namespace {

template <typename T>
Tensor<T> stack_samples(const std::vector<Sample<T>>& data, std::span<const std::size_t> idx,
                        bool targets) {
    const Shape4 one = data[idx[0]].input.shape();
    const Shape4 bs{static_cast<std::int64_t>(idx.size()), one.c, one.h, one.w};
    std::vector<T> buf(static_cast<std::size_t>(bs.numel()));
    const std::int64_t per = one.numel();
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const Tensor<T>& src = targets ? data[idx[i]].target : data[idx[i]].input;
        std::copy(src.values().begin(), src.values().end(),
                  buf.begin() + static_cast<std::int64_t>(i) * per);
    }
    return Tensor<T>::from_data(bs, std::move(buf));
}

template <typename T>
std::string first_nonfinite_grad(const Model<T>& model) {
    for (const auto& p : model.parameters()) {
        if (!p.value.has_grad()) continue;
        for (const T g : p.value.grad())
            if (!std::isfinite(static_cast<double>(g))) return p.name;
    }
    return "<none>";
}

} // namespace

template <typename T>
TrainSummary<T> train(Model<T>& model, const std::vector<Sample<T>>& data, const TrainConfig& cfg,
                      const std::function<void(int, const Model<T>&)>& epoch_callback) {
    if (data.empty() || static_cast<int>(data.size()) < cfg.batch_size)
        throw ValueError("train: dataset size " + std::to_string(data.size()) +
                         " smaller than batch size " + std::to_string(cfg.batch_size));
    if (cfg.batch_size < 1) throw ValueError("train: batch_size must be >= 1");

    TrainSummary<T> summary;
    const Tensor<T> probe = data[0].input;
    const bool is_super = model.spec().decoder == DecoderKind::super;
    if (is_super) {
        InferenceGuard<T> guard(model);
        auto tr = model.forward_trace(probe);
        const auto& out = tr.decoder_outs[0];
        const auto& skip = tr.skips[0];
        double worst = 0;
        for (std::int64_t i = 0; i < out.numel(); ++i)
            worst = std::max(worst, std::abs(static_cast<double>(out.values()[i]) -
                                             static_cast<double>(skip.values()[i])));
        summary.identity_at_init_residual = worst;
    }

    AdamState<T> state;
    const AdamConfig opt{cfg.lr, 0.9, 0.999, 1e-8};
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(hash_name(cfg.seed, "shuffle.epoch" + std::to_string(epoch)));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1],
                      order[static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);

        double epoch_loss = 0;
        int batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::span<const std::size_t> idx(order.data() + start, end - start);

            Tensor<T> inputs = stack_samples(data, idx, false);
            Tensor<T> targets = stack_samples(data, idx, true);
            Tensor<T> out = model.forward(inputs);
            Tensor<T> loss = cfg.loss == LossKind::bce
                                 ? bce_with_logits_mean(out, targets)
                                 : mse_mean(sub(inputs, out), targets);

            const double loss_val = static_cast<double>(loss.item());
            model.zero_grads();
            backward(loss);
            if (!std::isfinite(loss_val))
                throw TrainDivergedError(epoch, batch_index, first_nonfinite_grad(model));
            adam_step(model.parameters(), state, opt);

            epoch_loss += loss_val * static_cast<double>(idx.size());
            ++batch_index;
        }
        summary.loss_curve.push_back(epoch_loss / static_cast<double>(data.size()));
        if (is_super) summary.suppression_curve.push_back(suppression_residual(model, probe));
        if (epoch_callback && cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0)
            epoch_callback(epoch, model);
    }
    return summary;
}

template TrainSummary<float> train<float>(Model<float>&, const std::vector<Sample<float>>&,
                                          const TrainConfig&,
                                          const std::function<void(int, const Model<float>&)>&);
template TrainSummary<double> train<double>(Model<double>&, const std::vector<Sample<double>>&,
                                            const TrainConfig&,
                                            const std::function<void(int, const Model<double>&)>&);

} // namespace superdec
