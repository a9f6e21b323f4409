#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "scit/errors.hpp"
#include "scit/sha256.hpp"

namespace scit {

struct ModelConfig {
    int vocab_size = 64;
    int dim = 64;
    int n_layers = 2;
    int n_heads = 4;
    int max_seq = 128;
    uint64_t seed = 1;

    int head_dim() const { return dim / n_heads; }
    int mlp_hidden() const { return 4 * dim; }
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

// One trainable tensor viewed through the generic parameter iteration.
template <class S>
struct TensorRef {
    std::string name;
    std::vector<S>* data;
    int rows;
    int cols;  // 1 for vectors
};

template <class S>
struct ConstTensorRef {
    std::string name;
    const std::vector<S>* data;
    int rows;
    int cols;
};

template <class S>
struct LayerParams {
    std::vector<S> ln1_g, ln1_b;  // [dim]
    std::vector<S> wq, wk, wv, wo;  // [dim, dim] row-major [out][in]
    std::vector<S> ln2_g, ln2_b;  // [dim]
    std::vector<S> w_fc;    // [hidden, dim]
    std::vector<S> w_proj;  // [dim, hidden]
};

// Pre-norm causal transformer with learned position embeddings and an output
// head tied to the token embedding. Holds the base generator and the feature
// extractor alike; precision is a template parameter so the gradient checks
// can run the same code in double.
template <class S>
struct ModelParams {
    ModelConfig cfg;
    std::vector<S> tok_emb;  // [vocab, dim]
    std::vector<S> pos_emb;  // [max_seq, dim]
    std::vector<LayerParams<S>> layers;
    std::vector<S> lnf_g, lnf_b;  // [dim]

    // Visits every tensor in a fixed order shared by init, serialization,
    // the optimizer and the finite-difference harness.
    void for_each_tensor(const std::function<void(const TensorRef<S>&)>& fn);
    void for_each_tensor(const std::function<void(const ConstTensorRef<S>&)>& fn) const;

    size_t param_count() const;
    template <class T>
    ModelParams<T> cast() const;
};

using ModelParamsF = ModelParams<float>;
using ModelParamsD = ModelParams<double>;

// Scaled-normal init (std 0.02) with one seeded stream per tensor; layer norm
// weights start at 1, biases at 0.
template <class S>
ModelParams<S> init_params(const ModelConfig& cfg);

template <class S>
ModelParams<S> zero_like(const ModelParams<S>& p);

struct AdapterConfig {
    int rank = 4;
    float alpha = 16.0f;
    float dropout = 0.0f;
    // Per-layer projection kinds that receive low-rank deltas.
    std::vector<std::string> targets = {"attn.wq", "attn.wv"};
    void validate() const;
};

template <class S>
struct AdapterEntry {
    std::string tensor_name;  // e.g. "layers.0.attn.wq"
    int layer = 0;
    int kind = 0;  // 0 = wq, 1 = wk, 2 = wv, 3 = wo
    int out_dim = 0, in_dim = 0;
    std::vector<S> a;  // [rank, in]
    std::vector<S> b;  // [out, rank]
};

template <class S>
struct Adapter {
    std::string task_id;
    Sha256Digest base_hash;
    int rank = 0;
    float alpha = 0.0f;
    std::vector<AdapterEntry<S>> entries;  // layer-major, target order per config

    S scale() const { return static_cast<S>(alpha) / static_cast<S>(rank); }
    size_t param_count() const;
    template <class T>
    Adapter<T> cast() const;
};

using AdapterF = Adapter<float>;
using AdapterD = Adapter<double>;

template <class S>
struct Mat {
    int rows = 0, cols = 0;
    std::vector<S> v;
    S* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
    const S* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }
};

template <class S>
struct ForwardResult {
    Mat<S> logits;  // [len, vocab]
    // states[0] is the embedding sum, states[l] the residual stream after
    // block l. final_state applies the last layer norm; its last row is the
    // feature the switch network consumes.
    std::vector<Mat<S>> states;
    Mat<S> final_state;  // [len, dim]
};

template <class S>
ForwardResult<S> forward(const ModelParams<S>& params, const std::vector<int>& ids,
                         const Adapter<S>* adapter = nullptr);

// One (prompt, target) pair, already token ids. Framing (bos/sep/eos) is the
// caller's business; the loss masks every prompt position.
struct EncodedExample {
    std::vector<int> prompt;
    std::vector<int> target;
};

struct LossStats {
    double loss = 0.0;       // mean cross-entropy per target token
    size_t target_tokens = 0;
};

class Rng;

// Dropout on the adapter input (training only), drawn from the given stream.
struct LoraDropout {
    float p = 0.0f;
    Rng* rng = nullptr;
};

// Mean token-level cross-entropy over target positions of the batch, with
// gradients accumulated into the optional buffers (either may be null; base
// gradients are skipped entirely when base_grads is null, which is the frozen
// path used by adapter training).
template <class S>
LossStats lm_loss(const ModelParams<S>& params, const Adapter<S>* adapter,
                  const std::vector<EncodedExample>& batch, ModelParams<S>* base_grads,
                  Adapter<S>* adapter_grads, LoraDropout* dropout = nullptr);

// Greedy argmax decoding; ties pick the lowest token id. Stops at eos or
// max_new tokens; the returned continuation excludes eos.
template <class S>
std::vector<int> generate_greedy(const ModelParams<S>& params, const std::vector<int>& prompt,
                                 int max_new, int eos_id, const Adapter<S>* adapter = nullptr);

// Canonical serialized form (magic "SCLM"); the content hash is the SHA-256
// of these bytes.
std::vector<uint8_t> serialize_model(const ModelParamsF& params);
ModelParamsF deserialize_model(const std::vector<uint8_t>& bytes);
void save_model(const std::string& path, const ModelParamsF& params);
ModelParamsF load_model(const std::string& path);
Sha256Digest model_content_hash(const ModelParamsF& params);

}  // namespace scit
