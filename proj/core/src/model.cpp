#include "scit/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <limits>

#include "scit/rng.hpp"
#include "scit/serialize.hpp"

namespace scit {

void ModelConfig::validate() const {
    if (vocab_size < 1) throw ConfigError("vocab_size must be >= 1");
    if (dim < 1 || n_layers < 1 || n_heads < 1) throw ConfigError("model dims must be >= 1");
    if (dim % n_heads != 0) throw ConfigError("dim must be divisible by n_heads");
    if (max_seq < 2) throw ConfigError("max_seq must be >= 2");
}

void AdapterConfig::validate() const {
    if (rank < 1) throw ConfigError("adapter rank must be >= 1");
    if (dropout < 0.0f || dropout >= 1.0f) throw ConfigError("adapter dropout must be in [0, 1)");
    if (targets.empty()) throw ConfigError("adapter target set must be nonempty");
}

namespace {

template <class S, class Self, class Fn>
void visit_tensors(Self& p, Fn&& fn) {
    const int d = p.cfg.dim;
    const int h = p.cfg.mlp_hidden();
    int idx = 0;
    auto emit = [&](const std::string& name, auto& vec, int rows, int cols) {
        fn(idx++, name, vec, rows, cols);
    };
    emit("tok_emb", p.tok_emb, p.cfg.vocab_size, d);
    emit("pos_emb", p.pos_emb, p.cfg.max_seq, d);
    for (size_t l = 0; l < p.layers.size(); ++l) {
        auto& layer = p.layers[l];
        const std::string prefix = "layers." + std::to_string(l) + ".";
        emit(prefix + "ln1.g", layer.ln1_g, d, 1);
        emit(prefix + "ln1.b", layer.ln1_b, d, 1);
        emit(prefix + "attn.wq", layer.wq, d, d);
        emit(prefix + "attn.wk", layer.wk, d, d);
        emit(prefix + "attn.wv", layer.wv, d, d);
        emit(prefix + "attn.wo", layer.wo, d, d);
        emit(prefix + "ln2.g", layer.ln2_g, d, 1);
        emit(prefix + "ln2.b", layer.ln2_b, d, 1);
        emit(prefix + "mlp.w_fc", layer.w_fc, h, d);
        emit(prefix + "mlp.w_proj", layer.w_proj, d, h);
    }
    emit("lnf.g", p.lnf_g, d, 1);
    emit("lnf.b", p.lnf_b, d, 1);
}

}  // namespace

template <class S>
void ModelParams<S>::for_each_tensor(const std::function<void(const TensorRef<S>&)>& fn) {
    visit_tensors<S>(*this, [&](int, const std::string& name, std::vector<S>& v, int r, int c) {
        fn(TensorRef<S>{name, &v, r, c});
    });
}

template <class S>
void ModelParams<S>::for_each_tensor(const std::function<void(const ConstTensorRef<S>&)>& fn) const {
    visit_tensors<S>(*this, [&](int, const std::string& name, const std::vector<S>& v, int r, int c) {
        fn(ConstTensorRef<S>{name, &v, r, c});
    });
}

template <class S>
size_t ModelParams<S>::param_count() const {
    size_t n = 0;
    for_each_tensor([&](const ConstTensorRef<S>& t) { n += t.data->size(); });
    return n;
}

template <class S>
template <class T>
ModelParams<T> ModelParams<S>::cast() const {
    ModelParams<T> out;
    out.cfg = cfg;
    auto conv = [](const std::vector<S>& src) {
        std::vector<T> dst(src.size());
        for (size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(src[i]);
        return dst;
    };
    out.tok_emb = conv(tok_emb);
    out.pos_emb = conv(pos_emb);
    out.layers.resize(layers.size());
    for (size_t l = 0; l < layers.size(); ++l) {
        const auto& s = layers[l];
        auto& dl = out.layers[l];
        dl.ln1_g = conv(s.ln1_g);
        dl.ln1_b = conv(s.ln1_b);
        dl.wq = conv(s.wq);
        dl.wk = conv(s.wk);
        dl.wv = conv(s.wv);
        dl.wo = conv(s.wo);
        dl.ln2_g = conv(s.ln2_g);
        dl.ln2_b = conv(s.ln2_b);
        dl.w_fc = conv(s.w_fc);
        dl.w_proj = conv(s.w_proj);
    }
    out.lnf_g = conv(lnf_g);
    out.lnf_b = conv(lnf_b);
    return out;
}

template <class S>
ModelParams<S> init_params(const ModelConfig& cfg) {
    cfg.validate();
    ModelParams<S> p;
    p.cfg = cfg;
    const int d = cfg.dim;
    const int h = cfg.mlp_hidden();
    p.tok_emb.resize(static_cast<size_t>(cfg.vocab_size) * d);
    p.pos_emb.resize(static_cast<size_t>(cfg.max_seq) * d);
    p.layers.resize(static_cast<size_t>(cfg.n_layers));
    for (auto& layer : p.layers) {
        layer.ln1_g.resize(d);
        layer.ln1_b.resize(d);
        layer.wq.resize(static_cast<size_t>(d) * d);
        layer.wk.resize(static_cast<size_t>(d) * d);
        layer.wv.resize(static_cast<size_t>(d) * d);
        layer.wo.resize(static_cast<size_t>(d) * d);
        layer.ln2_g.resize(d);
        layer.ln2_b.resize(d);
        layer.w_fc.resize(static_cast<size_t>(h) * d);
        layer.w_proj.resize(static_cast<size_t>(d) * h);
    }
    p.lnf_g.resize(d);
    p.lnf_b.resize(d);

    constexpr double kInitStd = 0.02;
    p.for_each_tensor([&](const TensorRef<S>& t) {
        const bool is_norm = t.name.find("ln") != std::string::npos;
        if (is_norm) {
            const bool is_gain = t.name.ends_with(".g");
            std::fill(t.data->begin(), t.data->end(), is_gain ? S(1) : S(0));
            return;
        }
        // Per-tensor streams keyed by a stable hash of the name, so adding a
        // tensor never reshuffles the others' draws.
        const auto digest = sha256(t.name.data(), t.name.size());
        uint64_t salt = 0;
        for (int i = 0; i < 8; ++i) salt |= uint64_t(digest.bytes[static_cast<size_t>(i)]) << (8 * i);
        Rng rng(mix_seed(cfg.seed, salt));
        for (auto& w : *t.data) w = static_cast<S>(rng.normal() * kInitStd);
    });
    return p;
}

template <class S>
ModelParams<S> zero_like(const ModelParams<S>& p) {
    ModelParams<S> z = p;
    z.for_each_tensor([](const TensorRef<S>& t) { std::fill(t.data->begin(), t.data->end(), S(0)); });
    return z;
}

// ---------------------------------------------------------------------------
// forward / backward
// ---------------------------------------------------------------------------

namespace {

template <class S>
Mat<S> make_mat(int rows, int cols) {
    Mat<S> m;
    m.rows = rows;
    m.cols = cols;
    m.v.assign(static_cast<size_t>(rows) * cols, S(0));
    return m;
}

// y[t][o] = sum_i x[t][i] * w[o][i]
template <class S>
void project(const Mat<S>& x, const std::vector<S>& w, int out_dim, Mat<S>& y) {
    const int in = x.cols;
    for (int t = 0; t < x.rows; ++t) {
        const S* xt = x.row(t);
        S* yt = y.row(t);
        for (int o = 0; o < out_dim; ++o) {
            const S* wo = w.data() + static_cast<size_t>(o) * in;
            S acc = 0;
            for (int i = 0; i < in; ++i) acc += xt[i] * wo[i];
            yt[o] = acc;
        }
    }
}

// dw[o][i] += sum_t dy[t][o] * x[t][i];  dx[t][i] += sum_o dy[t][o] * w[o][i]
template <class S>
void project_backward(const Mat<S>& x, const std::vector<S>& w, int out_dim, const Mat<S>& dy,
                      std::vector<S>* dw, Mat<S>* dx) {
    const int in = x.cols;
    for (int t = 0; t < x.rows; ++t) {
        const S* xt = x.row(t);
        const S* dyt = dy.row(t);
        if (dw) {
            for (int o = 0; o < out_dim; ++o) {
                const S g = dyt[o];
                if (g == S(0)) continue;
                S* dwo = dw->data() + static_cast<size_t>(o) * in;
                for (int i = 0; i < in; ++i) dwo[i] += g * xt[i];
            }
        }
        if (dx) {
            S* dxt = dx->row(t);
            for (int o = 0; o < out_dim; ++o) {
                const S g = dyt[o];
                if (g == S(0)) continue;
                const S* wo = w.data() + static_cast<size_t>(o) * in;
                for (int i = 0; i < in; ++i) dxt[i] += g * wo[i];
            }
        }
    }
}

template <class S>
struct LnCache {
    std::vector<S> mean, rstd;
};

template <class S>
void layer_norm(const Mat<S>& x, const std::vector<S>& g, const std::vector<S>& b, Mat<S>& y,
                LnCache<S>& cache) {
    constexpr S kEps = static_cast<S>(1e-5);
    const int d = x.cols;
    cache.mean.resize(x.rows);
    cache.rstd.resize(x.rows);
    for (int t = 0; t < x.rows; ++t) {
        const S* xt = x.row(t);
        S mean = 0;
        for (int i = 0; i < d; ++i) mean += xt[i];
        mean /= d;
        S var = 0;
        for (int i = 0; i < d; ++i) {
            const S c = xt[i] - mean;
            var += c * c;
        }
        var /= d;
        const S rstd = S(1) / std::sqrt(var + kEps);
        cache.mean[t] = mean;
        cache.rstd[t] = rstd;
        S* yt = y.row(t);
        for (int i = 0; i < d; ++i) yt[i] = g[i] * ((xt[i] - mean) * rstd) + b[i];
    }
}

template <class S>
void layer_norm_backward(const Mat<S>& x, const std::vector<S>& g, const LnCache<S>& cache,
                         const Mat<S>& dy, std::vector<S>* dg, std::vector<S>* db, Mat<S>& dx) {
    const int d = x.cols;
    for (int t = 0; t < x.rows; ++t) {
        const S* xt = x.row(t);
        const S* dyt = dy.row(t);
        const S mean = cache.mean[t];
        const S rstd = cache.rstd[t];
        S sum_dxhat = 0, sum_dxhat_xhat = 0;
        for (int i = 0; i < d; ++i) {
            const S xhat = (xt[i] - mean) * rstd;
            const S dxhat = dyt[i] * g[i];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            if (dg) (*dg)[i] += dyt[i] * xhat;
            if (db) (*db)[i] += dyt[i];
        }
        const S inv_d = S(1) / d;
        S* dxt = dx.row(t);
        for (int i = 0; i < d; ++i) {
            const S xhat = (xt[i] - mean) * rstd;
            const S dxhat = dyt[i] * g[i];
            dxt[i] += rstd * (dxhat - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat);
        }
    }
}

template <class S>
S gelu(S x) {
    return S(0.5) * x * (S(1) + std::erf(x * S(0.70710678118654752440)));
}

template <class S>
S gelu_grad(S x) {
    const S cdf = S(0.5) * (S(1) + std::erf(x * S(0.70710678118654752440)));
    const S pdf = std::exp(S(-0.5) * x * x) * S(0.39894228040143267794);
    return cdf + x * pdf;
}

// Adapter entries resolved per layer: pointers for the q and v projections.
template <class S>
struct LayerAdapter {
    const AdapterEntry<S>* kind[4] = {nullptr, nullptr, nullptr, nullptr};
};

template <class S>
std::vector<LayerAdapter<S>> resolve_adapter(const ModelParams<S>& p, const Adapter<S>* adapter) {
    std::vector<LayerAdapter<S>> out(p.layers.size());
    if (!adapter) return out;
    for (const auto& e : adapter->entries) {
        if (e.layer < 0 || e.layer >= static_cast<int>(p.layers.size()))
            throw UnknownTargetError("adapter entry targets nonexistent layer: " + e.tensor_name);
        out[static_cast<size_t>(e.layer)].kind[e.kind] = &e;
    }
    return out;
}

// Adds the low-rank delta scale * B * (A * x) into y. x is the adapter input
// (already dropout-masked during training); u_cache receives the A*x rows the
// backward pass needs.
template <class S>
void add_lora_delta(const Mat<S>& x, const AdapterEntry<S>* e, S scale, Mat<S>& y, Mat<S>* u_cache) {
    if (!e) return;
    const int in = x.cols;
    const int out_dim = y.cols;
    const int rank = static_cast<int>(e->a.size()) / in;
    for (int t = 0; t < x.rows; ++t) {
        const S* xt = x.row(t);
        S* ut = u_cache->row(t);
        for (int r = 0; r < rank; ++r) {
            const S* ar = e->a.data() + static_cast<size_t>(r) * in;
            S acc = 0;
            for (int i = 0; i < in; ++i) acc += ar[i] * xt[i];
            ut[r] = acc;
        }
        S* yt = y.row(t);
        for (int o = 0; o < out_dim; ++o) {
            const S* bo = e->b.data() + static_cast<size_t>(o) * rank;
            S acc = 0;
            for (int r = 0; r < rank; ++r) acc += bo[r] * ut[r];
            const S delta = scale * acc;
            // Skipping an exact zero keeps a fresh adapter (B = 0)
            // bit-identical to the base forward.
            if (delta != S(0)) yt[o] += delta;
        }
    }
}

template <class S>
struct LayerCache {
    Mat<S> ln1_out;
    LnCache<S> ln1;
    Mat<S> q, k, v;
    std::array<Mat<S>, 3> lora_u;     // adapter intermediates A*x for q/k/v, [len, rank]
    std::array<Mat<S>, 3> lora_in;    // dropout-masked adapter inputs (empty when no dropout)
    std::array<Mat<S>, 3> lora_mask;  // the masks themselves, for the backward pass
    std::vector<Mat<S>> att;     // per head, [len, len], causal rows
    Mat<S> att_mix;              // heads re-concatenated [len, dim]
    Mat<S> x_attn;               // residual stream after attention
    Mat<S> ln2_out;
    LnCache<S> ln2;
    Mat<S> fc_pre, fc_act;
    Mat<S> x_out;
};

template <class S>
struct FullCache {
    std::vector<Mat<S>> states;  // states[0] = embeddings, states[l] = after block l
    std::vector<LayerCache<S>> layers;
    Mat<S> final_state;
    LnCache<S> lnf;
    Mat<S> logits;
};

enum class LogitsMode { kAll, kLastOnly };

template <class S>
FullCache<S> forward_cached(const ModelParams<S>& p, const std::vector<int>& ids,
                            const Adapter<S>* adapter, LogitsMode mode,
                            LoraDropout* dropout = nullptr) {
    const int len = static_cast<int>(ids.size());
    const int d = p.cfg.dim;
    const int hd = p.cfg.head_dim();
    const int nh = p.cfg.n_heads;
    const int mh = p.cfg.mlp_hidden();
    if (len > p.cfg.max_seq)
        throw SequenceTooLongError("sequence length " + std::to_string(len) + " exceeds max_seq " +
                                   std::to_string(p.cfg.max_seq));
    if (len == 0) throw Error("cannot run forward on an empty sequence");
    for (int id : ids)
        if (id < 0 || id >= p.cfg.vocab_size) throw Error("token id out of range: " + std::to_string(id));

    const auto layer_adapters = resolve_adapter(p, adapter);
    const S lora_scale = adapter ? adapter->scale() : S(0);
    const int rank = adapter ? adapter->rank : 0;

    FullCache<S> c;
    c.states.reserve(p.layers.size() + 1);
    Mat<S> x = make_mat<S>(len, d);
    for (int t = 0; t < len; ++t) {
        const S* te = p.tok_emb.data() + static_cast<size_t>(ids[t]) * d;
        const S* pe = p.pos_emb.data() + static_cast<size_t>(t) * d;
        S* xt = x.row(t);
        for (int i = 0; i < d; ++i) xt[i] = te[i] + pe[i];
    }
    c.states.push_back(x);

    c.layers.resize(p.layers.size());
    const S inv_sqrt_hd = S(1) / std::sqrt(static_cast<S>(hd));
    for (size_t l = 0; l < p.layers.size(); ++l) {
        const auto& lp = p.layers[l];
        auto& lc = c.layers[l];
        const auto& la = layer_adapters[l];
        const Mat<S>& xin = c.states.back();

        lc.ln1_out = make_mat<S>(len, d);
        layer_norm(xin, lp.ln1_g, lp.ln1_b, lc.ln1_out, lc.ln1);

        lc.q = make_mat<S>(len, d);
        lc.k = make_mat<S>(len, d);
        lc.v = make_mat<S>(len, d);
        project(lc.ln1_out, lp.wq, d, lc.q);
        project(lc.ln1_out, lp.wk, d, lc.k);
        project(lc.ln1_out, lp.wv, d, lc.v);
        Mat<S>* qkv[3] = {&lc.q, &lc.k, &lc.v};
        for (int kind = 0; kind < 3; ++kind) {
            const AdapterEntry<S>* e = la.kind[kind];
            if (!e) continue;
            auto& u = lc.lora_u[static_cast<size_t>(kind)];
            u = make_mat<S>(len, rank);
            const Mat<S>* lin = &lc.ln1_out;
            if (dropout && dropout->p > 0.0f) {
                auto& mask = lc.lora_mask[static_cast<size_t>(kind)];
                auto& dropped = lc.lora_in[static_cast<size_t>(kind)];
                mask = make_mat<S>(len, d);
                dropped = make_mat<S>(len, d);
                const S keep_scale = S(1) / (S(1) - static_cast<S>(dropout->p));
                for (size_t i = 0; i < mask.v.size(); ++i) {
                    mask.v[i] = dropout->rng->uniform() < dropout->p ? S(0) : keep_scale;
                    dropped.v[i] = mask.v[i] * lc.ln1_out.v[i];
                }
                lin = &dropped;
            }
            add_lora_delta(*lin, e, lora_scale, *qkv[kind], &u);
        }

        lc.att.resize(static_cast<size_t>(nh));
        lc.att_mix = make_mat<S>(len, d);
        std::vector<S> scores(static_cast<size_t>(len));
        for (int h = 0; h < nh; ++h) {
            auto& att = lc.att[static_cast<size_t>(h)];
            att = make_mat<S>(len, len);
            const int off = h * hd;
            for (int t = 0; t < len; ++t) {
                const S* qt = lc.q.row(t) + off;
                S maxs = std::numeric_limits<S>::lowest();
                for (int j = 0; j <= t; ++j) {
                    const S* kj = lc.k.row(j) + off;
                    S acc = 0;
                    for (int i = 0; i < hd; ++i) acc += qt[i] * kj[i];
                    scores[static_cast<size_t>(j)] = acc * inv_sqrt_hd;
                    maxs = std::max(maxs, scores[static_cast<size_t>(j)]);
                }
                S denom = 0;
                S* at = att.row(t);
                for (int j = 0; j <= t; ++j) {
                    const S e = std::exp(scores[static_cast<size_t>(j)] - maxs);
                    at[j] = e;
                    denom += e;
                }
                const S inv = S(1) / denom;
                S* mix = lc.att_mix.row(t) + off;
                for (int i = 0; i < hd; ++i) mix[i] = 0;
                for (int j = 0; j <= t; ++j) {
                    at[j] *= inv;
                    const S w = at[j];
                    const S* vj = lc.v.row(j) + off;
                    for (int i = 0; i < hd; ++i) mix[i] += w * vj[i];
                }
            }
        }

        Mat<S> proj = make_mat<S>(len, d);
        project(lc.att_mix, lp.wo, d, proj);
        lc.x_attn = make_mat<S>(len, d);
        for (int t = 0; t < len; ++t) {
            const S* xt = xin.row(t);
            const S* pt = proj.row(t);
            S* ot = lc.x_attn.row(t);
            for (int i = 0; i < d; ++i) ot[i] = xt[i] + pt[i];
        }

        lc.ln2_out = make_mat<S>(len, d);
        layer_norm(lc.x_attn, lp.ln2_g, lp.ln2_b, lc.ln2_out, lc.ln2);
        lc.fc_pre = make_mat<S>(len, mh);
        project(lc.ln2_out, lp.w_fc, mh, lc.fc_pre);
        lc.fc_act = make_mat<S>(len, mh);
        for (size_t i = 0; i < lc.fc_pre.v.size(); ++i) lc.fc_act.v[i] = gelu(lc.fc_pre.v[i]);
        Mat<S> mlp_out = make_mat<S>(len, d);
        project(lc.fc_act, lp.w_proj, d, mlp_out);

        lc.x_out = make_mat<S>(len, d);
        for (int t = 0; t < len; ++t) {
            const S* xt = lc.x_attn.row(t);
            const S* mt = mlp_out.row(t);
            S* ot = lc.x_out.row(t);
            for (int i = 0; i < d; ++i) ot[i] = xt[i] + mt[i];
        }
        c.states.push_back(lc.x_out);
    }

    c.final_state = make_mat<S>(len, d);
    layer_norm(c.states.back(), p.lnf_g, p.lnf_b, c.final_state, c.lnf);

    const int first_logit_row = (mode == LogitsMode::kAll) ? 0 : len - 1;
    c.logits = make_mat<S>(len, p.cfg.vocab_size);
    for (int t = first_logit_row; t < len; ++t) {
        const S* ft = c.final_state.row(t);
        S* lt = c.logits.row(t);
        for (int w = 0; w < p.cfg.vocab_size; ++w) {
            const S* ew = p.tok_emb.data() + static_cast<size_t>(w) * d;
            S acc = 0;
            for (int i = 0; i < d; ++i) acc += ft[i] * ew[i];
            lt[w] = acc;
        }
    }
    return c;
}

}  // namespace

template <class S>
ForwardResult<S> forward(const ModelParams<S>& params, const std::vector<int>& ids,
                         const Adapter<S>* adapter) {
    auto cache = forward_cached(params, ids, adapter, LogitsMode::kAll);
    ForwardResult<S> r;
    r.logits = std::move(cache.logits);
    r.states = std::move(cache.states);
    r.final_state = std::move(cache.final_state);
    return r;
}

template <class S>
LossStats lm_loss(const ModelParams<S>& params, const Adapter<S>* adapter,
                  const std::vector<EncodedExample>& batch, ModelParams<S>* base_grads,
                  Adapter<S>* adapter_grads, LoraDropout* dropout) {
    const int d = params.cfg.dim;
    const int hd = params.cfg.head_dim();
    const int nh = params.cfg.n_heads;
    const int mh = params.cfg.mlp_hidden();
    const int vocab = params.cfg.vocab_size;
    const S inv_sqrt_hd = S(1) / std::sqrt(static_cast<S>(hd));

    size_t total_targets = 0;
    for (const auto& ex : batch) {
        if (ex.target.empty()) throw EmptyTargetError("training example has an empty target");
        if (ex.prompt.empty()) throw Error("training example has an empty prompt");
        if (ex.prompt.size() + ex.target.size() > static_cast<size_t>(params.cfg.max_seq))
            throw SequenceTooLongError("prompt + target exceeds max_seq");
        total_targets += ex.target.size();
    }
    if (batch.empty()) return {};

    const auto layer_adapters = resolve_adapter(params, adapter);
    std::vector<AdapterEntry<S>*> grad_entries;
    if (adapter_grads) {
        for (auto& e : adapter_grads->entries) grad_entries.push_back(&e);
    }
    auto adapter_grad_for = [&](const AdapterEntry<S>* e) -> AdapterEntry<S>* {
        if (!adapter_grads || !e) return nullptr;
        for (auto* ge : grad_entries)
            if (ge->tensor_name == e->tensor_name) return ge;
        return nullptr;
    };

    const S inv_total = S(1) / static_cast<S>(total_targets);
    double loss_sum = 0.0;

    for (const auto& ex : batch) {
        std::vector<int> ids = ex.prompt;
        ids.insert(ids.end(), ex.target.begin(), ex.target.end());
        const int len = static_cast<int>(ids.size());
        const int prompt_len = static_cast<int>(ex.prompt.size());

        auto cache = forward_cached(params, ids, adapter, LogitsMode::kAll, dropout);

        // Cross-entropy at positions predicting target tokens; gradient in
        // dlogits, scaled so the batch loss is a mean over target tokens.
        Mat<S> dlogits = make_mat<S>(len, vocab);
        for (int t = prompt_len - 1; t < len - 1; ++t) {
            const int want = ids[t + 1];
            const S* lt = cache.logits.row(t);
            S maxl = lt[0];
            for (int w = 1; w < vocab; ++w) maxl = std::max(maxl, lt[w]);
            S denom = 0;
            for (int w = 0; w < vocab; ++w) denom += std::exp(lt[w] - maxl);
            const S log_denom = std::log(denom);
            loss_sum += static_cast<double>(log_denom - (lt[want] - maxl));
            S* dlt = dlogits.row(t);
            const S inv_denom = S(1) / denom;
            for (int w = 0; w < vocab; ++w) dlt[w] = std::exp(lt[w] - maxl) * inv_denom * inv_total;
            dlt[want] -= inv_total;
        }

        if (!base_grads && !adapter_grads) continue;

        // --- head (tied embedding) and final norm ---
        Mat<S> dfinal = make_mat<S>(len, d);
        for (int t = prompt_len - 1; t < len - 1; ++t) {
            const S* dlt = dlogits.row(t);
            const S* ft = cache.final_state.row(t);
            S* dft = dfinal.row(t);
            for (int w = 0; w < vocab; ++w) {
                const S g = dlt[w];
                if (g == S(0)) continue;
                const S* ew = params.tok_emb.data() + static_cast<size_t>(w) * d;
                for (int i = 0; i < d; ++i) dft[i] += g * ew[i];
                if (base_grads) {
                    S* dew = base_grads->tok_emb.data() + static_cast<size_t>(w) * d;
                    for (int i = 0; i < d; ++i) dew[i] += g * ft[i];
                }
            }
        }

        Mat<S> dx = make_mat<S>(len, d);
        layer_norm_backward(cache.states.back(), params.lnf_g, cache.lnf, dfinal,
                            base_grads ? &base_grads->lnf_g : nullptr,
                            base_grads ? &base_grads->lnf_b : nullptr, dx);

        // --- blocks in reverse ---
        for (int l = static_cast<int>(params.layers.size()) - 1; l >= 0; --l) {
            const auto& lp = params.layers[static_cast<size_t>(l)];
            auto& lc = cache.layers[static_cast<size_t>(l)];
            const auto& la = layer_adapters[static_cast<size_t>(l)];
            auto* lg = base_grads ? &base_grads->layers[static_cast<size_t>(l)] : nullptr;
            const Mat<S>& xin = cache.states[static_cast<size_t>(l)];

            // MLP path: x_out = x_attn + w_proj * gelu(w_fc * ln2(x_attn))
            Mat<S> dact = make_mat<S>(len, mh);
            project_backward(lc.fc_act, lp.w_proj, d, dx, lg ? &lg->w_proj : nullptr, &dact);
            Mat<S> dpre = make_mat<S>(len, mh);
            for (size_t i = 0; i < dact.v.size(); ++i)
                dpre.v[i] = dact.v[i] * gelu_grad(lc.fc_pre.v[i]);
            Mat<S> dln2 = make_mat<S>(len, d);
            project_backward(lc.ln2_out, lp.w_fc, mh, dpre, lg ? &lg->w_fc : nullptr, &dln2);
            // dx currently holds d(x_out); the residual passes it through to
            // x_attn, plus the layer-norm path.
            layer_norm_backward(lc.x_attn, lp.ln2_g, lc.ln2, dln2, lg ? &lg->ln2_g : nullptr,
                                lg ? &lg->ln2_b : nullptr, dx);

            // Attention path: x_attn = xin + wo * mix
            Mat<S> dmix = make_mat<S>(len, d);
            project_backward(lc.att_mix, lp.wo, d, dx, lg ? &lg->wo : nullptr, &dmix);

            Mat<S> dq = make_mat<S>(len, d);
            Mat<S> dk = make_mat<S>(len, d);
            Mat<S> dv = make_mat<S>(len, d);
            std::vector<S> datt(static_cast<size_t>(params.cfg.max_seq));
            for (int h = 0; h < nh; ++h) {
                const auto& att = lc.att[static_cast<size_t>(h)];
                const int off = h * hd;
                for (int t = 0; t < len; ++t) {
                    const S* dmt = dmix.row(t) + off;
                    const S* at = att.row(t);
                    // d(att weights) and dv
                    S dot = 0;
                    for (int j = 0; j <= t; ++j) {
                        const S* vj = lc.v.row(j) + off;
                        S acc = 0;
                        for (int i = 0; i < hd; ++i) acc += dmt[i] * vj[i];
                        datt[static_cast<size_t>(j)] = acc;
                        dot += acc * at[j];
                        S* dvj = dv.row(j) + off;
                        const S w = at[j];
                        for (int i = 0; i < hd; ++i) dvj[i] += w * dmt[i];
                    }
                    // softmax backward -> scores, then q/k
                    const S* qt = lc.q.row(t) + off;
                    S* dqt = dq.row(t) + off;
                    for (int j = 0; j <= t; ++j) {
                        const S ds = at[j] * (datt[static_cast<size_t>(j)] - dot) * inv_sqrt_hd;
                        if (ds == S(0)) continue;
                        const S* kj = lc.k.row(j) + off;
                        S* dkj = dk.row(j) + off;
                        for (int i = 0; i < hd; ++i) {
                            dqt[i] += ds * kj[i];
                            dkj[i] += ds * qt[i];
                        }
                    }
                }
            }

            // q/k/v projections (with adapter deltas) back to ln1_out.
            Mat<S> dln1 = make_mat<S>(len, d);
            project_backward(lc.ln1_out, lp.wq, d, dq, lg ? &lg->wq : nullptr, &dln1);
            project_backward(lc.ln1_out, lp.wk, d, dk, lg ? &lg->wk : nullptr, &dln1);
            project_backward(lc.ln1_out, lp.wv, d, dv, lg ? &lg->wv : nullptr, &dln1);
            const S lora_scale = adapter ? adapter->scale() : S(0);
            auto lora_backward = [&](int kind, const Mat<S>& dy) {
                const AdapterEntry<S>* e = la.kind[kind];
                if (!e) return;
                AdapterEntry<S>* eg = adapter_grad_for(e);
                const auto& u = lc.lora_u[static_cast<size_t>(kind)];
                const bool dropped = !lc.lora_in[static_cast<size_t>(kind)].v.empty();
                const Mat<S>& ain = dropped ? lc.lora_in[static_cast<size_t>(kind)] : lc.ln1_out;
                const Mat<S>& mask = lc.lora_mask[static_cast<size_t>(kind)];
                const int rank = adapter->rank;
                std::vector<S> du(static_cast<size_t>(rank));
                for (int t = 0; t < len; ++t) {
                    const S* dyt = dy.row(t);
                    const S* ut = u.row(t);
                    const S* at = ain.row(t);
                    for (int r = 0; r < rank; ++r) du[static_cast<size_t>(r)] = 0;
                    for (int o = 0; o < d; ++o) {
                        const S g = lora_scale * dyt[o];
                        if (g == S(0)) continue;
                        const S* bo = e->b.data() + static_cast<size_t>(o) * rank;
                        if (eg) {
                            S* dbo = eg->b.data() + static_cast<size_t>(o) * rank;
                            for (int r = 0; r < rank; ++r) dbo[r] += g * ut[r];
                        }
                        for (int r = 0; r < rank; ++r) du[static_cast<size_t>(r)] += g * bo[r];
                    }
                    S* dln1t = dln1.row(t);
                    const S* mt = dropped ? mask.row(t) : nullptr;
                    for (int r = 0; r < rank; ++r) {
                        const S dur = du[static_cast<size_t>(r)];
                        if (dur == S(0)) continue;
                        const S* ar = e->a.data() + static_cast<size_t>(r) * d;
                        if (eg) {
                            S* dar = eg->a.data() + static_cast<size_t>(r) * d;
                            for (int i = 0; i < d; ++i) dar[i] += dur * at[i];
                        }
                        if (mt) {
                            for (int i = 0; i < d; ++i) dln1t[i] += mt[i] * dur * ar[i];
                        } else {
                            for (int i = 0; i < d; ++i) dln1t[i] += dur * ar[i];
                        }
                    }
                }
            };
            lora_backward(0, dq);
            lora_backward(1, dk);
            lora_backward(2, dv);

            layer_norm_backward(xin, lp.ln1_g, lc.ln1, dln1, lg ? &lg->ln1_g : nullptr,
                                lg ? &lg->ln1_b : nullptr, dx);
        }

        // --- embeddings ---
        if (base_grads) {
            for (int t = 0; t < len; ++t) {
                const S* dxt = dx.row(t);
                S* dte = base_grads->tok_emb.data() + static_cast<size_t>(ids[t]) * d;
                S* dpe = base_grads->pos_emb.data() + static_cast<size_t>(t) * d;
                for (int i = 0; i < d; ++i) {
                    dte[i] += dxt[i];
                    dpe[i] += dxt[i];
                }
            }
        }
    }

    LossStats stats;
    stats.target_tokens = total_targets;
    stats.loss = loss_sum / static_cast<double>(total_targets);
    return stats;
}

template <class S>
std::vector<int> generate_greedy(const ModelParams<S>& params, const std::vector<int>& prompt,
                                 int max_new, int eos_id, const Adapter<S>* adapter) {
    if (prompt.empty()) throw Error("generation prompt must be nonempty");
    if (static_cast<int>(prompt.size()) > params.cfg.max_seq)
        throw SequenceTooLongError("prompt exceeds max_seq");

    std::vector<int> ids = prompt;
    std::vector<int> out;
    for (int step = 0; step < max_new; ++step) {
        if (static_cast<int>(ids.size()) >= params.cfg.max_seq) break;  // context exhausted
        auto cache = forward_cached(params, ids, adapter, LogitsMode::kLastOnly);
        const S* last = cache.logits.row(static_cast<int>(ids.size()) - 1);
        int best = 0;
        for (int w = 1; w < params.cfg.vocab_size; ++w)
            if (last[w] > last[best]) best = w;  // strict ">" keeps the lowest id on ties
        if (best == eos_id) break;
        out.push_back(best);
        ids.push_back(best);
    }
    return out;
}

// ---------------------------------------------------------------------------
// adapter bookkeeping shared with lora.cpp
// ---------------------------------------------------------------------------

template <class S>
size_t Adapter<S>::param_count() const {
    size_t n = 0;
    for (const auto& e : entries) n += e.a.size() + e.b.size();
    return n;
}

template <class S>
template <class T>
Adapter<T> Adapter<S>::cast() const {
    Adapter<T> out;
    out.task_id = task_id;
    out.base_hash = base_hash;
    out.rank = rank;
    out.alpha = alpha;
    out.entries.reserve(entries.size());
    for (const auto& e : entries) {
        AdapterEntry<T> ne;
        ne.tensor_name = e.tensor_name;
        ne.layer = e.layer;
        ne.kind = e.kind;
        ne.out_dim = e.out_dim;
        ne.in_dim = e.in_dim;
        ne.a.assign(e.a.begin(), e.a.end());
        ne.b.assign(e.b.begin(), e.b.end());
        out.entries.push_back(std::move(ne));
    }
    return out;
}

// ---------------------------------------------------------------------------
// serialization (magic "SCLM", version 1, little-endian)
// ---------------------------------------------------------------------------

namespace {
constexpr char kModelMagic[4] = {'S', 'C', 'L', 'M'};
constexpr uint16_t kModelVersion = 1;
}  // namespace

std::vector<uint8_t> serialize_model(const ModelParamsF& params) {
    ByteWriter w;
    w.bytes(kModelMagic, 4);
    w.u16(kModelVersion);
    w.u32(static_cast<uint32_t>(params.cfg.vocab_size));
    w.u32(static_cast<uint32_t>(params.cfg.dim));
    w.u32(static_cast<uint32_t>(params.cfg.n_layers));
    w.u32(static_cast<uint32_t>(params.cfg.n_heads));
    w.u32(static_cast<uint32_t>(params.cfg.max_seq));
    w.u64(params.cfg.seed);

    uint32_t count = 0;
    params.for_each_tensor([&](const ConstTensorRef<float>&) { ++count; });
    w.u32(count);
    params.for_each_tensor([&](const ConstTensorRef<float>& t) {
        w.str(t.name);
        if (t.cols == 1) {
            w.u32(1);
            w.u32(static_cast<uint32_t>(t.rows));
        } else {
            w.u32(2);
            w.u32(static_cast<uint32_t>(t.rows));
            w.u32(static_cast<uint32_t>(t.cols));
        }
        w.f32_array(t.data->data(), t.data->size());
    });
    return w.take();
}

ModelParamsF deserialize_model(const std::vector<uint8_t>& bytes) {
    ByteReader r(bytes);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kModelMagic, 4) != 0) throw SerializeError("not a model file (bad magic)");
    const uint16_t version = r.u16();
    if (version != kModelVersion)
        throw SerializeError("unsupported model version " + std::to_string(version));
    ModelConfig cfg;
    cfg.vocab_size = static_cast<int>(r.u32());
    cfg.dim = static_cast<int>(r.u32());
    cfg.n_layers = static_cast<int>(r.u32());
    cfg.n_heads = static_cast<int>(r.u32());
    cfg.max_seq = static_cast<int>(r.u32());
    cfg.seed = r.u64();
    cfg.validate();

    ModelParamsF params = init_params<float>(cfg);
    const uint32_t count = r.u32();
    uint32_t seen = 0;
    params.for_each_tensor([&](const TensorRef<float>& t) {
        if (seen++ >= count) throw SerializeError("model file has too few tensors");
        const std::string name = r.str();
        if (name != t.name)
            throw SerializeError("unexpected tensor '" + name + "', wanted '" + t.name + "'");
        const uint32_t rank = r.u32();
        uint64_t n = 1;
        for (uint32_t i = 0; i < rank; ++i) n *= r.u32();
        if (n != t.data->size()) throw SerializeError("tensor '" + name + "' has wrong shape");
        *t.data = r.f32_array(static_cast<size_t>(n));
    });
    if (seen != count) throw SerializeError("model file tensor count mismatch");
    if (!r.at_end()) throw SerializeError("trailing bytes in model file");
    return params;
}

void save_model(const std::string& path, const ModelParamsF& params) {
    write_file_atomic(path, serialize_model(params));
}

ModelParamsF load_model(const std::string& path) { return deserialize_model(read_file_bytes(path)); }

Sha256Digest model_content_hash(const ModelParamsF& params) {
    const auto bytes = serialize_model(params);
    return sha256(bytes);
}

// ---------------------------------------------------------------------------
// explicit instantiations
// ---------------------------------------------------------------------------

template struct ModelParams<float>;
template struct ModelParams<double>;
template struct Adapter<float>;
template struct Adapter<double>;

template ModelParams<float> init_params<float>(const ModelConfig&);
template ModelParams<double> init_params<double>(const ModelConfig&);
template ModelParams<float> zero_like<float>(const ModelParams<float>&);
template ModelParams<double> zero_like<double>(const ModelParams<double>&);

template ForwardResult<float> forward<float>(const ModelParams<float>&, const std::vector<int>&,
                                             const Adapter<float>*);
template ForwardResult<double> forward<double>(const ModelParams<double>&, const std::vector<int>&,
                                               const Adapter<double>*);

template LossStats lm_loss<float>(const ModelParams<float>&, const Adapter<float>*,
                                  const std::vector<EncodedExample>&, ModelParams<float>*,
                                  Adapter<float>*, LoraDropout*);
template LossStats lm_loss<double>(const ModelParams<double>&, const Adapter<double>*,
                                   const std::vector<EncodedExample>&, ModelParams<double>*,
                                   Adapter<double>*, LoraDropout*);

template std::vector<int> generate_greedy<float>(const ModelParams<float>&, const std::vector<int>&,
                                                 int, int, const Adapter<float>*);
template std::vector<int> generate_greedy<double>(const ModelParams<double>&, const std::vector<int>&,
                                                  int, int, const Adapter<double>*);

template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template Adapter<double> Adapter<float>::cast<double>() const;
template Adapter<float> Adapter<double>::cast<float>() const;

}  // namespace scit
