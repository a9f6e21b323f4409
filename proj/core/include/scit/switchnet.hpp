#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "scit/lora.hpp"
#include "scit/model.hpp"
#include "scit/tokenizer.hpp"

namespace scit {

// Frozen small LM whose final-layer last-token state is the instruction
// feature. Never fine-tuned; its content hash pins classifier compatibility.
class FeatureExtractor {
public:
    FeatureExtractor(ModelParamsF model, Tokenizer tokenizer);

    // Final-layer hidden state at the last token of [bos] ++ encode(text).
    std::vector<float> extract(const std::string& text) const;

    int feature_dim() const { return model_.cfg.dim; }
    const Sha256Digest& model_hash() const { return hash_; }
    const Tokenizer& tokenizer() const { return tokenizer_; }
    const ModelParamsF& model() const { return model_; }

private:
    ModelParamsF model_;
    Tokenizer tokenizer_;
    Sha256Digest hash_;
};

struct SwitchTrainConfig {
    double learning_rate = 1e-3;
    int epochs = 20;
    int batch_size = 8;
    int hidden_dim = 64;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    uint64_t seed = 0;

    void validate() const;
};

// Two-layer ReLU MLP over extractor features; one class per learned task.
struct SwitchClassifier {
    int in_dim = 0;
    int hidden_dim = 0;
    int n_classes = 0;
    std::vector<float> w1, b1;  // [hidden, in], [hidden]
    std::vector<float> w2, b2;  // [classes, hidden], [classes]
    std::vector<std::string> class_tasks;  // class index -> task_id
    Sha256Digest extractor_hash;
    double train_accuracy = 0.0;

    size_t param_count() const;
    std::vector<double> logits(const std::vector<float>& feature) const;
};

// Trains a fresh classifier from scratch on cached features. labels[i] is the
// class of features[i]; every class in [0, n_classes) must appear at least
// once. Deterministic given cfg.seed.
SwitchClassifier train_classifier(const std::vector<std::vector<float>>& features,
                                  const std::vector<int>& labels,
                                  const std::vector<std::string>& class_tasks,
                                  const Sha256Digest& extractor_hash, const SwitchTrainConfig& cfg);

// Softmax class posterior and argmax (ties -> lowest class index).
std::pair<int, std::vector<double>> classify(const SwitchClassifier& clf,
                                             const std::vector<float>& feature);

struct RouteResult {
    std::string task_id;
    int class_index = 0;
    std::vector<double> probs;
};

RouteResult classify_text(const SwitchClassifier& clf, const FeatureExtractor& extractor,
                          const std::string& text);

// task_id -> adapter file, loaded lazily with base-hash verification. The
// audit log records each file the registry actually read.
class AdapterRegistry {
public:
    void add(const std::string& task_id, const std::string& path);
    bool has(const std::string& task_id) const;
    const AdapterF& get(const std::string& task_id, const Sha256Digest& base_hash);
    const std::vector<std::string>& audit_log() const { return audit_; }
    std::vector<std::string> task_ids() const;

private:
    std::map<std::string, std::string> paths_;
    std::map<std::string, AdapterF> loaded_;
    std::vector<std::string> audit_;
};

// classify + registry lookup. Every class must have a registered adapter.
const AdapterF& route(const SwitchClassifier& clf, const FeatureExtractor& extractor,
                      AdapterRegistry& registry, const std::string& text,
                      const Sha256Digest& base_hash, RouteResult* info = nullptr);

std::vector<uint8_t> serialize_classifier(const SwitchClassifier& clf);
SwitchClassifier deserialize_classifier(const std::vector<uint8_t>& bytes);
void save_classifier(const std::string& path, const SwitchClassifier& clf);
SwitchClassifier load_classifier(const std::string& path);

// Throws HashMismatchError if the classifier was trained over a different
// extractor.
void verify_extractor(const SwitchClassifier& clf, const FeatureExtractor& extractor);

}  // namespace scit
