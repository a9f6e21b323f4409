#include "scit/train.hpp"

#include <algorithm>
#include <cmath>

#include "scit/rng.hpp"

namespace scit {

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (grad_clip < 0.0) throw ConfigError("grad_clip must be >= 0");
}

template <class S>
AdamW<S>::AdamW(std::vector<ParamView<S>> params, const TrainConfig& cfg)
    : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p.size, S(0));
        v_.emplace_back(p.size, S(0));
    }
}

template <class S>
void AdamW<S>::step(const std::vector<ParamView<S>>& grads) {
    ++t_;
    const S b1 = static_cast<S>(cfg_.beta1);
    const S b2 = static_cast<S>(cfg_.beta2);
    const S lr = static_cast<S>(cfg_.learning_rate);
    const S eps = static_cast<S>(cfg_.eps);
    const S wd = static_cast<S>(cfg_.weight_decay);
    const S bc1 = S(1) - static_cast<S>(std::pow(cfg_.beta1, static_cast<double>(t_)));
    const S bc2 = S(1) - static_cast<S>(std::pow(cfg_.beta2, static_cast<double>(t_)));
    for (size_t p = 0; p < params_.size(); ++p) {
        S* w = params_[p].data;
        const S* g = grads[p].data;
        S* m = m_[p].data();
        S* v = v_[p].data();
        const size_t n = params_[p].size;
        for (size_t i = 0; i < n; ++i) {
            m[i] = b1 * m[i] + (S(1) - b1) * g[i];
            v[i] = b2 * v[i] + (S(1) - b2) * g[i] * g[i];
            const S mhat = m[i] / bc1;
            const S vhat = v[i] / bc2;
            w[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * w[i]);
        }
    }
}

template <class S>
double clip_gradients(const std::vector<ParamView<S>>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& g : grads)
        for (size_t i = 0; i < g.size; ++i) sq += static_cast<double>(g.data[i]) * g.data[i];
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const S scale = static_cast<S>(max_norm / norm);
        for (const auto& g : grads)
            for (size_t i = 0; i < g.size; ++i) g.data[i] *= scale;
    }
    return norm;
}

namespace {

std::vector<ParamView<float>> model_views(ModelParamsF& p) {
    std::vector<ParamView<float>> views;
    p.for_each_tensor([&](const TensorRef<float>& t) {
        views.push_back({t.data->data(), t.data->size()});
    });
    return views;
}

}  // namespace

TrainStats train_lm(ModelParamsF& params, const std::vector<EncodedExample>& data,
                    const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw ConfigError("training dataset is empty");

    ModelParamsF grads = zero_like(params);
    AdamW<float> opt(model_views(params), cfg);
    const auto grad_views = model_views(grads);

    TrainStats stats;
    std::vector<size_t> order(data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(cfg.seed, static_cast<uint64_t>(epoch) + 1));
        shuffle_rng.shuffle(order);

        double epoch_ce = 0.0;
        size_t epoch_tokens = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            if (cfg.max_steps >= 0 && stats.steps >= static_cast<size_t>(cfg.max_steps)) break;
            const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            std::vector<EncodedExample> batch;
            batch.reserve(end - start);
            for (size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);

            for (const auto& v : grad_views) std::fill(v.data, v.data + v.size, 0.0f);
            const LossStats loss = lm_loss<float>(params, nullptr, batch, &grads, nullptr);
            if (!std::isfinite(loss.loss))
                throw TrainingDivergedError("non-finite loss at step " + std::to_string(stats.steps) +
                                            " (epoch " + std::to_string(epoch) + ")");
            epoch_ce += loss.loss * static_cast<double>(loss.target_tokens);
            epoch_tokens += loss.target_tokens;

            if (cfg.grad_clip > 0.0) clip_gradients(grad_views, cfg.grad_clip);
            opt.step(grad_views);
            ++stats.steps;
        }
        if (epoch_tokens > 0) stats.epoch_loss.push_back(epoch_ce / static_cast<double>(epoch_tokens));
    }
    return stats;
}

template class AdamW<float>;
template class AdamW<double>;
template double clip_gradients<float>(const std::vector<ParamView<float>>&, double);
template double clip_gradients<double>(const std::vector<ParamView<double>>&, double);

}  // namespace scit
