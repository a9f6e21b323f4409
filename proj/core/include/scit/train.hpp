#pragma once

#include <cstdint>
#include <vector>

#include "scit/model.hpp"

namespace scit {

struct TrainConfig {
    double learning_rate = 1e-3;
    int epochs = 3;
    int batch_size = 16;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double grad_clip = 0.0;  // global-norm clip; 0 disables
    uint64_t seed = 0;
    int max_steps = -1;  // step cap for smoke runs; -1 = unlimited

    void validate() const;
};

struct TrainStats {
    std::vector<double> epoch_loss;  // token-weighted mean cross-entropy per epoch
    size_t steps = 0;
};

template <class S>
struct ParamView {
    S* data = nullptr;
    size_t size = 0;
};

// Decoupled-weight-decay Adam with bias correction and a constant schedule.
template <class S>
class AdamW {
public:
    AdamW(std::vector<ParamView<S>> params, const TrainConfig& cfg);
    void step(const std::vector<ParamView<S>>& grads);

private:
    std::vector<ParamView<S>> params_;
    std::vector<std::vector<S>> m_, v_;
    TrainConfig cfg_;
    int64_t t_ = 0;
};

// Scales grads to the configured global norm if they exceed it. Returns the
// pre-clip norm.
template <class S>
double clip_gradients(const std::vector<ParamView<S>>& grads, double max_norm);

// Full-model language-model training (used for pretraining the base and the
// feature extractor). Deterministic given (cfg.seed, data order).
TrainStats train_lm(ModelParamsF& params, const std::vector<EncodedExample>& data,
                    const TrainConfig& cfg);

}  // namespace scit
