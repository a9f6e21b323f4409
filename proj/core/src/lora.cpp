#include "scit/lora.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "scit/rng.hpp"
#include "scit/serialize.hpp"

namespace scit {

namespace {

struct TargetKind {
    const char* suffix;
    int kind;
};

constexpr TargetKind kTargetKinds[] = {
    {"attn.wq", 0},
    {"attn.wk", 1},
    {"attn.wv", 2},
};

int kind_for_target(const std::string& target) {
    for (const auto& t : kTargetKinds)
        if (target == t.suffix) return t.kind;
    throw UnknownTargetError("unknown adapter target '" + target +
                             "' (valid: attn.wq, attn.wk, attn.wv)");
}

}  // namespace

template <class S>
Adapter<S> init_adapter(const ModelParams<S>& base, const AdapterConfig& cfg,
                        const std::string& task_id, uint64_t seed) {
    cfg.validate();
    const int d = base.cfg.dim;

    Adapter<S> adapter;
    adapter.task_id = task_id;
    adapter.rank = cfg.rank;
    adapter.alpha = cfg.alpha;
    if constexpr (std::is_same_v<S, float>) {
        adapter.base_hash = model_content_hash(base);
    } else {
        adapter.base_hash = model_content_hash(base.template cast<float>());
    }

    int stream = 0;
    for (int layer = 0; layer < base.cfg.n_layers; ++layer) {
        for (const auto& target : cfg.targets) {
            const int kind = kind_for_target(target);
            AdapterEntry<S> e;
            e.tensor_name = "layers." + std::to_string(layer) + "." + target;
            e.layer = layer;
            e.kind = kind;
            e.out_dim = d;
            e.in_dim = d;
            e.a.resize(static_cast<size_t>(cfg.rank) * d);
            e.b.assign(static_cast<size_t>(d) * cfg.rank, S(0));
            Rng rng(mix_seed(seed, static_cast<uint64_t>(stream++)));
            for (auto& w : e.a) w = static_cast<S>(rng.normal() * 0.02);
            adapter.entries.push_back(std::move(e));
        }
    }
    return adapter;
}

template <class S>
std::vector<S> effective_weight(const std::vector<S>& w, int out_dim, int in_dim,
                                const std::vector<S>& a, const std::vector<S>& b, S alpha, int rank) {
    if (rank < 1) throw ConfigError("rank must be >= 1");
    if (w.size() != static_cast<size_t>(out_dim) * in_dim)
        throw ConfigError("effective_weight: W shape mismatch");
    if (a.size() != static_cast<size_t>(rank) * in_dim)
        throw ConfigError("effective_weight: A shape mismatch");
    if (b.size() != static_cast<size_t>(out_dim) * rank)
        throw ConfigError("effective_weight: B shape mismatch");

    const S scale = alpha / static_cast<S>(rank);
    std::vector<S> out = w;
    for (int o = 0; o < out_dim; ++o) {
        const S* bo = b.data() + static_cast<size_t>(o) * rank;
        S* wo = out.data() + static_cast<size_t>(o) * in_dim;
        for (int r = 0; r < rank; ++r) {
            const S br = scale * bo[r];
            if (br == S(0)) continue;
            const S* ar = a.data() + static_cast<size_t>(r) * in_dim;
            for (int i = 0; i < in_dim; ++i) wo[i] += br * ar[i];
        }
    }
    return out;
}

template <class S>
TrainStats train_adapter(const ModelParams<S>& base, Adapter<S>& adapter,
                         const std::vector<EncodedExample>& data, const AdapterConfig& acfg,
                         const TrainConfig& tcfg) {
    tcfg.validate();
    acfg.validate();
    if (data.empty()) throw ConfigError("adapter training dataset is empty");

    Adapter<S> grads = adapter;
    for (auto& e : grads.entries) {
        std::fill(e.a.begin(), e.a.end(), S(0));
        std::fill(e.b.begin(), e.b.end(), S(0));
    }

    std::vector<ParamView<S>> param_views, grad_views;
    for (size_t i = 0; i < adapter.entries.size(); ++i) {
        param_views.push_back({adapter.entries[i].a.data(), adapter.entries[i].a.size()});
        param_views.push_back({adapter.entries[i].b.data(), adapter.entries[i].b.size()});
        grad_views.push_back({grads.entries[i].a.data(), grads.entries[i].a.size()});
        grad_views.push_back({grads.entries[i].b.data(), grads.entries[i].b.size()});
    }
    AdamW<S> opt(param_views, tcfg);

    Rng dropout_rng(mix_seed(tcfg.seed, 0x4d524f50ULL));
    LoraDropout dropout{acfg.dropout, &dropout_rng};
    LoraDropout* dropout_ptr = acfg.dropout > 0.0f ? &dropout : nullptr;

    TrainStats stats;
    std::vector<size_t> order(data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(tcfg.seed, static_cast<uint64_t>(epoch) + 1));
        shuffle_rng.shuffle(order);

        double epoch_ce = 0.0;
        size_t epoch_tokens = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(tcfg.batch_size)) {
            if (tcfg.max_steps >= 0 && stats.steps >= static_cast<size_t>(tcfg.max_steps)) break;
            const size_t end = std::min(order.size(), start + static_cast<size_t>(tcfg.batch_size));
            std::vector<EncodedExample> batch;
            batch.reserve(end - start);
            for (size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);

            for (auto& e : grads.entries) {
                std::fill(e.a.begin(), e.a.end(), S(0));
                std::fill(e.b.begin(), e.b.end(), S(0));
            }
            const LossStats loss = lm_loss<S>(base, &adapter, batch, nullptr, &grads, dropout_ptr);
            if (!std::isfinite(loss.loss))
                throw TrainingDivergedError("non-finite adapter loss at step " +
                                            std::to_string(stats.steps) + " (epoch " +
                                            std::to_string(epoch) + ")");
            epoch_ce += loss.loss * static_cast<double>(loss.target_tokens);
            epoch_tokens += loss.target_tokens;

            if (tcfg.grad_clip > 0.0) clip_gradients(grad_views, tcfg.grad_clip);
            opt.step(grad_views);
            ++stats.steps;
        }
        if (epoch_tokens > 0) stats.epoch_loss.push_back(epoch_ce / static_cast<double>(epoch_tokens));
    }
    return stats;
}

void verify_adapter(const Sha256Digest& base_hash, const AdapterF& adapter) {
    if (!(adapter.base_hash == base_hash))
        throw HashMismatchError("adapter '" + adapter.task_id +
                                "' was built for a different base model (hash " +
                                adapter.base_hash.hex().substr(0, 12) + "... vs " +
                                base_hash.hex().substr(0, 12) + "...)");
}

void verify_adapter(const ModelParamsF& base, const AdapterF& adapter) {
    verify_adapter(model_content_hash(base), adapter);
}

ModelParamsF merge(const ModelParamsF& base, const AdapterF& adapter) {
    verify_adapter(base, adapter);
    ModelParamsF merged = base;
    for (const auto& e : adapter.entries) {
        auto& layer = merged.layers.at(static_cast<size_t>(e.layer));
        std::vector<float>* w = nullptr;
        switch (e.kind) {
            case 0: w = &layer.wq; break;
            case 1: w = &layer.wk; break;
            case 2: w = &layer.wv; break;
            default: throw UnknownTargetError("adapter entry has unknown kind");
        }
        *w = effective_weight(*w, e.out_dim, e.in_dim, e.a, e.b, adapter.alpha,
                              adapter.rank);
    }
    return merged;
}

// ---------------------------------------------------------------------------
// serialization (magic "SCIT", version 1)
// ---------------------------------------------------------------------------

namespace {
constexpr char kAdapterMagic[4] = {'S', 'C', 'I', 'T'};
constexpr uint16_t kAdapterVersion = 1;
}  // namespace

std::vector<uint8_t> serialize_adapter(const AdapterF& adapter) {
    ByteWriter w;
    w.bytes(kAdapterMagic, 4);
    w.u16(kAdapterVersion);
    w.str(adapter.task_id);
    w.bytes(adapter.base_hash.bytes.data(), adapter.base_hash.bytes.size());
    w.u32(static_cast<uint32_t>(adapter.rank));
    w.f32(adapter.alpha);
    w.u32(static_cast<uint32_t>(adapter.entries.size()));
    for (const auto& e : adapter.entries) {
        w.str(e.tensor_name);
        w.u32(static_cast<uint32_t>(adapter.rank));
        w.u32(static_cast<uint32_t>(e.in_dim));
        w.f32_array(e.a.data(), e.a.size());
        w.u32(static_cast<uint32_t>(e.out_dim));
        w.u32(static_cast<uint32_t>(adapter.rank));
        w.f32_array(e.b.data(), e.b.size());
    }
    return w.take();
}

AdapterF deserialize_adapter(const std::vector<uint8_t>& bytes) {
    ByteReader r(bytes);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kAdapterMagic, 4) != 0)
        throw SerializeError("not an adapter file (bad magic)");
    const uint16_t version = r.u16();
    if (version != kAdapterVersion)
        throw SerializeError("unsupported adapter version " + std::to_string(version));

    AdapterF adapter;
    adapter.task_id = r.str();
    r.bytes(adapter.base_hash.bytes.data(), adapter.base_hash.bytes.size());
    adapter.rank = static_cast<int>(r.u32());
    adapter.alpha = r.f32();
    const uint32_t count = r.u32();
    if (adapter.rank < 1) throw SerializeError("adapter file has invalid rank");
    for (uint32_t i = 0; i < count; ++i) {
        AdapterEntry<float> e;
        e.tensor_name = r.str();
        const uint32_t a_rows = r.u32();
        const uint32_t a_cols = r.u32();
        if (a_rows != static_cast<uint32_t>(adapter.rank))
            throw SerializeError("adapter entry A rank mismatch");
        e.in_dim = static_cast<int>(a_cols);
        e.a = r.f32_array(static_cast<size_t>(a_rows) * a_cols);
        const uint32_t b_rows = r.u32();
        const uint32_t b_cols = r.u32();
        if (b_cols != static_cast<uint32_t>(adapter.rank))
            throw SerializeError("adapter entry B rank mismatch");
        e.out_dim = static_cast<int>(b_rows);
        e.b = r.f32_array(static_cast<size_t>(b_rows) * b_cols);

        // Recover layer / kind from the tensor name.
        const std::string prefix = "layers.";
        if (e.tensor_name.rfind(prefix, 0) != 0)
            throw SerializeError("adapter entry has unexpected tensor name: " + e.tensor_name);
        const size_t dot = e.tensor_name.find('.', prefix.size());
        if (dot == std::string::npos)
            throw SerializeError("adapter entry has unexpected tensor name: " + e.tensor_name);
        e.layer = std::stoi(e.tensor_name.substr(prefix.size(), dot - prefix.size()));
        e.kind = kind_for_target(e.tensor_name.substr(dot + 1));
        adapter.entries.push_back(std::move(e));
    }
    if (!r.at_end()) throw SerializeError("trailing bytes in adapter file");
    return adapter;
}

void save_adapter(const std::string& path, const AdapterF& adapter) {
    write_file_atomic(path, serialize_adapter(adapter));
}

AdapterF load_adapter(const std::string& path) {
    return deserialize_adapter(read_file_bytes(path));
}

// ---------------------------------------------------------------------------

template Adapter<float> init_adapter<float>(const ModelParams<float>&, const AdapterConfig&,
                                            const std::string&, uint64_t);
template Adapter<double> init_adapter<double>(const ModelParams<double>&, const AdapterConfig&,
                                              const std::string&, uint64_t);
template std::vector<float> effective_weight<float>(const std::vector<float>&, int, int,
                                                    const std::vector<float>&,
                                                    const std::vector<float>&, float, int);
template std::vector<double> effective_weight<double>(const std::vector<double>&, int, int,
                                                      const std::vector<double>&,
                                                      const std::vector<double>&, double, int);
template TrainStats train_adapter<float>(const ModelParams<float>&, Adapter<float>&,
                                         const std::vector<EncodedExample>&, const AdapterConfig&,
                                         const TrainConfig&);
template TrainStats train_adapter<double>(const ModelParams<double>&, Adapter<double>&,
                                          const std::vector<EncodedExample>&, const AdapterConfig&,
                                          const TrainConfig&);

}  // namespace scit
