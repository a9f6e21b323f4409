#include "scit/switchnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include <nlohmann/json.hpp>

#include "scit/rng.hpp"
#include "scit/serialize.hpp"
#include "scit/train.hpp"

namespace scit {

using nlohmann::json;

FeatureExtractor::FeatureExtractor(ModelParamsF model, Tokenizer tokenizer)
    : model_(std::move(model)), tokenizer_(std::move(tokenizer)) {
    hash_ = model_content_hash(model_);
}

std::vector<float> FeatureExtractor::extract(const std::string& text) const {
    std::vector<int> ids;
    ids.push_back(tokenizer_.bos_id());
    const auto text_ids = tokenizer_.encode(text);
    if (text_ids.empty()) throw EmptyInstructionError("instruction is empty after tokenization");
    ids.insert(ids.end(), text_ids.begin(), text_ids.end());
    if (static_cast<int>(ids.size()) > model_.cfg.max_seq)
        ids.resize(static_cast<size_t>(model_.cfg.max_seq));  // clip long queries to the context

    const auto result = forward<float>(model_, ids);
    const int last = result.final_state.rows - 1;
    const float* row = result.final_state.row(last);
    return std::vector<float>(row, row + result.final_state.cols);
}

void SwitchTrainConfig::validate() const {
    if (learning_rate <= 0.0) throw ConfigError("classifier learning_rate must be > 0");
    if (epochs < 1) throw ConfigError("classifier epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("classifier batch_size must be >= 1");
    if (hidden_dim < 1) throw ConfigError("classifier hidden_dim must be >= 1");
}

size_t SwitchClassifier::param_count() const {
    return w1.size() + b1.size() + w2.size() + b2.size();
}

std::vector<double> SwitchClassifier::logits(const std::vector<float>& feature) const {
    if (static_cast<int>(feature.size()) != in_dim)
        throw ConfigError("feature length does not match classifier input dim");
    std::vector<float> hidden(static_cast<size_t>(hidden_dim));
    for (int h = 0; h < hidden_dim; ++h) {
        const float* wrow = w1.data() + static_cast<size_t>(h) * in_dim;
        float acc = b1[static_cast<size_t>(h)];
        for (int i = 0; i < in_dim; ++i) acc += wrow[i] * feature[static_cast<size_t>(i)];
        hidden[static_cast<size_t>(h)] = acc > 0.0f ? acc : 0.0f;
    }
    std::vector<double> out(static_cast<size_t>(n_classes));
    for (int c = 0; c < n_classes; ++c) {
        const float* wrow = w2.data() + static_cast<size_t>(c) * hidden_dim;
        float acc = b2[static_cast<size_t>(c)];
        for (int h = 0; h < hidden_dim; ++h) acc += wrow[h] * hidden[static_cast<size_t>(h)];
        out[static_cast<size_t>(c)] = static_cast<double>(acc);
    }
    return out;
}

namespace {

std::vector<double> softmax(const std::vector<double>& logits) {
    const double maxl = *std::max_element(logits.begin(), logits.end());
    std::vector<double> probs(logits.size());
    double denom = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(logits[i] - maxl);
        denom += probs[i];
    }
    for (double& p : probs) p /= denom;
    return probs;
}

}  // namespace

SwitchClassifier train_classifier(const std::vector<std::vector<float>>& features,
                                  const std::vector<int>& labels,
                                  const std::vector<std::string>& class_tasks,
                                  const Sha256Digest& extractor_hash, const SwitchTrainConfig& cfg) {
    cfg.validate();
    if (features.empty() || features.size() != labels.size())
        throw ConfigError("classifier needs matching feature/label lists");
    const int n_classes = static_cast<int>(class_tasks.size());
    if (n_classes < 1) throw ConfigError("classifier needs at least one class");

    std::set<int> present(labels.begin(), labels.end());
    for (int c = 0; c < n_classes; ++c)
        if (!present.count(c))
            throw MissingClassError("no training example for class " + std::to_string(c) + " ('" +
                                    class_tasks[static_cast<size_t>(c)] + "')");
    for (int l : labels)
        if (l < 0 || l >= n_classes) throw ConfigError("label out of range");

    const int in_dim = static_cast<int>(features.front().size());
    for (const auto& f : features)
        if (static_cast<int>(f.size()) != in_dim) throw ConfigError("inconsistent feature lengths");

    SwitchClassifier clf;
    clf.in_dim = in_dim;
    clf.hidden_dim = cfg.hidden_dim;
    clf.n_classes = n_classes;
    clf.class_tasks = class_tasks;
    clf.extractor_hash = extractor_hash;
    clf.w1.resize(static_cast<size_t>(cfg.hidden_dim) * in_dim);
    clf.b1.assign(static_cast<size_t>(cfg.hidden_dim), 0.0f);
    clf.w2.resize(static_cast<size_t>(n_classes) * cfg.hidden_dim);
    clf.b2.assign(static_cast<size_t>(n_classes), 0.0f);
    {
        Rng rng(mix_seed(cfg.seed, 0x5731ULL));
        for (auto& w : clf.w1) w = static_cast<float>(rng.normal() * 0.02);
        for (auto& w : clf.w2) w = static_cast<float>(rng.normal() * 0.02);
    }

    TrainConfig opt_cfg;
    opt_cfg.learning_rate = cfg.learning_rate;
    opt_cfg.beta1 = cfg.beta1;
    opt_cfg.beta2 = cfg.beta2;
    opt_cfg.eps = cfg.eps;
    opt_cfg.epochs = cfg.epochs;
    opt_cfg.batch_size = cfg.batch_size;

    std::vector<float> gw1(clf.w1.size()), gb1(clf.b1.size()), gw2(clf.w2.size()), gb2(clf.b2.size());
    std::vector<ParamView<float>> params = {{clf.w1.data(), clf.w1.size()},
                                            {clf.b1.data(), clf.b1.size()},
                                            {clf.w2.data(), clf.w2.size()},
                                            {clf.b2.data(), clf.b2.size()}};
    std::vector<ParamView<float>> grads = {{gw1.data(), gw1.size()},
                                           {gb1.data(), gb1.size()},
                                           {gw2.data(), gw2.size()},
                                           {gb2.data(), gb2.size()}};
    AdamW<float> opt(params, opt_cfg);

    std::vector<size_t> order(features.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<float> hidden(static_cast<size_t>(cfg.hidden_dim));
    std::vector<float> pre(static_cast<size_t>(cfg.hidden_dim));
    std::vector<double> logits(static_cast<size_t>(n_classes));
    std::vector<double> dlogits(static_cast<size_t>(n_classes));
    std::vector<float> dhidden(static_cast<size_t>(cfg.hidden_dim));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(cfg.seed, static_cast<uint64_t>(epoch) + 1));
        shuffle_rng.shuffle(order);
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            const float inv_batch = 1.0f / static_cast<float>(end - start);
            std::fill(gw1.begin(), gw1.end(), 0.0f);
            std::fill(gb1.begin(), gb1.end(), 0.0f);
            std::fill(gw2.begin(), gw2.end(), 0.0f);
            std::fill(gb2.begin(), gb2.end(), 0.0f);

            for (size_t bi = start; bi < end; ++bi) {
                const auto& x = features[order[bi]];
                const int y = labels[order[bi]];

                for (int h = 0; h < cfg.hidden_dim; ++h) {
                    const float* wrow = clf.w1.data() + static_cast<size_t>(h) * in_dim;
                    float acc = clf.b1[static_cast<size_t>(h)];
                    for (int i = 0; i < in_dim; ++i) acc += wrow[i] * x[static_cast<size_t>(i)];
                    pre[static_cast<size_t>(h)] = acc;
                    hidden[static_cast<size_t>(h)] = acc > 0.0f ? acc : 0.0f;
                }
                for (int c = 0; c < n_classes; ++c) {
                    const float* wrow = clf.w2.data() + static_cast<size_t>(c) * cfg.hidden_dim;
                    float acc = clf.b2[static_cast<size_t>(c)];
                    for (int h = 0; h < cfg.hidden_dim; ++h)
                        acc += wrow[h] * hidden[static_cast<size_t>(h)];
                    logits[static_cast<size_t>(c)] = static_cast<double>(acc);
                }
                const auto probs = softmax(logits);
                for (int c = 0; c < n_classes; ++c)
                    dlogits[static_cast<size_t>(c)] =
                        (probs[static_cast<size_t>(c)] - (c == y ? 1.0 : 0.0)) * inv_batch;

                std::fill(dhidden.begin(), dhidden.end(), 0.0f);
                for (int c = 0; c < n_classes; ++c) {
                    const float g = static_cast<float>(dlogits[static_cast<size_t>(c)]);
                    float* gw = gw2.data() + static_cast<size_t>(c) * cfg.hidden_dim;
                    const float* wrow = clf.w2.data() + static_cast<size_t>(c) * cfg.hidden_dim;
                    for (int h = 0; h < cfg.hidden_dim; ++h) {
                        gw[h] += g * hidden[static_cast<size_t>(h)];
                        dhidden[static_cast<size_t>(h)] += g * wrow[h];
                    }
                    gb2[static_cast<size_t>(c)] += g;
                }
                for (int h = 0; h < cfg.hidden_dim; ++h) {
                    if (pre[static_cast<size_t>(h)] <= 0.0f) continue;
                    const float g = dhidden[static_cast<size_t>(h)];
                    float* gw = gw1.data() + static_cast<size_t>(h) * in_dim;
                    for (int i = 0; i < in_dim; ++i) gw[i] += g * x[static_cast<size_t>(i)];
                    gb1[static_cast<size_t>(h)] += g;
                }
            }
            opt.step(grads);
        }
    }

    size_t correct = 0;
    for (size_t i = 0; i < features.size(); ++i) {
        const auto [cls, probs] = classify(clf, features[i]);
        if (cls == labels[i]) ++correct;
    }
    clf.train_accuracy = static_cast<double>(correct) / static_cast<double>(features.size());
    return clf;
}

std::pair<int, std::vector<double>> classify(const SwitchClassifier& clf,
                                             const std::vector<float>& feature) {
    const auto probs = softmax(clf.logits(feature));
    int best = 0;
    for (int c = 1; c < clf.n_classes; ++c)
        if (probs[static_cast<size_t>(c)] > probs[static_cast<size_t>(best)]) best = c;
    return {best, probs};
}

RouteResult classify_text(const SwitchClassifier& clf, const FeatureExtractor& extractor,
                          const std::string& text) {
    const auto feature = extractor.extract(text);
    const auto [cls, probs] = classify(clf, feature);
    RouteResult r;
    r.class_index = cls;
    r.task_id = clf.class_tasks.at(static_cast<size_t>(cls));
    r.probs = probs;
    return r;
}

void AdapterRegistry::add(const std::string& task_id, const std::string& path) {
    paths_[task_id] = path;
}

bool AdapterRegistry::has(const std::string& task_id) const { return paths_.count(task_id) > 0; }

std::vector<std::string> AdapterRegistry::task_ids() const {
    std::vector<std::string> out;
    out.reserve(paths_.size());
    for (const auto& [id, _] : paths_) out.push_back(id);
    return out;
}

const AdapterF& AdapterRegistry::get(const std::string& task_id, const Sha256Digest& base_hash) {
    auto loaded = loaded_.find(task_id);
    if (loaded != loaded_.end()) return loaded->second;
    auto it = paths_.find(task_id);
    if (it == paths_.end())
        throw UnregisteredTaskError("no adapter registered for task '" + task_id + "'");
    AdapterF adapter = load_adapter(it->second);
    verify_adapter(base_hash, adapter);
    audit_.push_back(it->second);
    return loaded_.emplace(task_id, std::move(adapter)).first->second;
}

const AdapterF& route(const SwitchClassifier& clf, const FeatureExtractor& extractor,
                      AdapterRegistry& registry, const std::string& text,
                      const Sha256Digest& base_hash, RouteResult* info) {
    const RouteResult r = classify_text(clf, extractor, text);
    if (info) *info = r;
    return registry.get(r.task_id, base_hash);
}

// ---------------------------------------------------------------------------
// serialization (magic "SCSW", version 1)
// ---------------------------------------------------------------------------

namespace {
constexpr char kSwitchMagic[4] = {'S', 'C', 'S', 'W'};
constexpr uint16_t kSwitchVersion = 1;

void write_tensor(ByteWriter& w, const std::string& name, const std::vector<float>& v,
                  std::initializer_list<uint32_t> dims) {
    w.str(name);
    w.u32(static_cast<uint32_t>(dims.size()));
    for (uint32_t d : dims) w.u32(d);
    w.f32_array(v.data(), v.size());
}

std::vector<float> read_tensor(ByteReader& r, const std::string& want_name) {
    const std::string name = r.str();
    if (name != want_name)
        throw SerializeError("unexpected tensor '" + name + "', wanted '" + want_name + "'");
    const uint32_t rank = r.u32();
    uint64_t n = 1;
    for (uint32_t i = 0; i < rank; ++i) n *= r.u32();
    return r.f32_array(static_cast<size_t>(n));
}
}  // namespace

std::vector<uint8_t> serialize_classifier(const SwitchClassifier& clf) {
    ByteWriter w;
    w.bytes(kSwitchMagic, 4);
    w.u16(kSwitchVersion);
    w.bytes(clf.extractor_hash.bytes.data(), clf.extractor_hash.bytes.size());

    json table;
    table["class_tasks"] = clf.class_tasks;
    table["train_accuracy"] = clf.train_accuracy;
    w.str(table.dump());

    w.u32(4);
    write_tensor(w, "w1", clf.w1,
                 {static_cast<uint32_t>(clf.hidden_dim), static_cast<uint32_t>(clf.in_dim)});
    write_tensor(w, "b1", clf.b1, {static_cast<uint32_t>(clf.hidden_dim)});
    write_tensor(w, "w2", clf.w2,
                 {static_cast<uint32_t>(clf.n_classes), static_cast<uint32_t>(clf.hidden_dim)});
    write_tensor(w, "b2", clf.b2, {static_cast<uint32_t>(clf.n_classes)});
    return w.take();
}

SwitchClassifier deserialize_classifier(const std::vector<uint8_t>& bytes) {
    ByteReader r(bytes);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kSwitchMagic, 4) != 0)
        throw SerializeError("not a classifier file (bad magic)");
    const uint16_t version = r.u16();
    if (version != kSwitchVersion)
        throw SerializeError("unsupported classifier version " + std::to_string(version));

    SwitchClassifier clf;
    r.bytes(clf.extractor_hash.bytes.data(), clf.extractor_hash.bytes.size());
    const json table = json::parse(r.str());
    clf.class_tasks = table.at("class_tasks").get<std::vector<std::string>>();
    clf.train_accuracy = table.at("train_accuracy").get<double>();

    const uint32_t count = r.u32();
    if (count != 4) throw SerializeError("classifier file must hold 4 tensors");
    clf.w1 = read_tensor(r, "w1");
    clf.b1 = read_tensor(r, "b1");
    clf.w2 = read_tensor(r, "w2");
    clf.b2 = read_tensor(r, "b2");
    if (!r.at_end()) throw SerializeError("trailing bytes in classifier file");

    clf.hidden_dim = static_cast<int>(clf.b1.size());
    clf.n_classes = static_cast<int>(clf.b2.size());
    if (clf.hidden_dim < 1 || clf.n_classes < 1 || clf.w1.size() % clf.b1.size() != 0)
        throw SerializeError("classifier file has inconsistent shapes");
    clf.in_dim = static_cast<int>(clf.w1.size() / clf.b1.size());
    if (clf.w2.size() != static_cast<size_t>(clf.n_classes) * clf.hidden_dim)
        throw SerializeError("classifier file has inconsistent shapes");
    if (clf.class_tasks.size() != static_cast<size_t>(clf.n_classes))
        throw SerializeError("classifier class table does not match tensor shapes");
    return clf;
}

void save_classifier(const std::string& path, const SwitchClassifier& clf) {
    write_file_atomic(path, serialize_classifier(clf));
}

SwitchClassifier load_classifier(const std::string& path) {
    return deserialize_classifier(read_file_bytes(path));
}

void verify_extractor(const SwitchClassifier& clf, const FeatureExtractor& extractor) {
    if (!(clf.extractor_hash == extractor.model_hash()))
        throw HashMismatchError("classifier was trained over a different feature extractor");
}

}  // namespace scit
