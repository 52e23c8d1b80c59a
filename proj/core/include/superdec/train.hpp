#pragma once

#include <functional>

#include "superdec/data.hpp"
#include "superdec/metrics.hpp"
#include "superdec/optim.hpp"

namespace superdec {

enum class LossKind { bce, mse };

struct TrainConfig {
    int epochs = 30;
    int batch_size = 8;
    double lr = 1e-3;
    std::uint64_t seed = 1;  // model init and shuffle seed
    LossKind loss = LossKind::bce;
    int eval_every = 0;  // 0 = final evaluation only
    std::string dtype = "f32";
};

// Raised when a training loss goes non-finite; names the first parameter
// whose gradient blew up so divergence is attributable to a layer.
class TrainDivergedError : public Error {
public:
    TrainDivergedError(int epoch, int batch, std::string layer)
        : Error("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                std::to_string(batch) + ", first non-finite gradient in '" + layer + "'"),
          epoch(epoch), batch(batch), layer(std::move(layer)) {}
    int epoch;
    int batch;
    std::string layer;
};

template <typename T>
struct TrainSummary {
    std::vector<double> loss_curve;                      // mean training loss per epoch
    std::vector<std::vector<double>> suppression_curve;  // per epoch, per stage (super only)
    std::optional<double> identity_at_init_residual;     // super only, measured pre-training
};

// Deterministic mini-batch Adam (beta1 0.9, beta2 0.999, eps 1e-8): fixed
// per-epoch shuffle from the seed, fixed batch assembly and reduction order.
// The denoise loss treats the head output as a predicted noise residual.
template <typename T>
TrainSummary<T> train(Model<T>& model, const std::vector<Sample<T>>& data, const TrainConfig& cfg,
                      const std::function<void(int, const Model<T>&)>& epoch_callback = {});

} // namespace superdec
