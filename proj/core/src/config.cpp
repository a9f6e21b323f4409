#include "scit/config.hpp"

#include <set>

#include <nlohmann/json.hpp>

#include "scit/serialize.hpp"
#include "scit/tasks.hpp"

namespace scit {

using nlohmann::json;

namespace {

// Applies `fn(key, value)` to every member and rejects keys fn doesn't claim.
class SectionReader {
public:
    SectionReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + " must be a JSON object");
    }

    template <class T>
    void field(const char* key, T& out) {
        claimed_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(path_ + "." + key + " has the wrong type");
        }
    }

    const json* section(const char* key) {
        claimed_.insert(key);
        if (!j_.contains(key)) return nullptr;
        return &j_.at(key);
    }

    void finish() const {
        for (const auto& [key, _] : j_.items())
            if (!claimed_.count(key)) throw ConfigError("unknown config key: " + path_ + "." + key);
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> claimed_;
};

void read_model(const json& j, const std::string& path, ModelConfig& cfg) {
    SectionReader r(j, path);
    r.field("dim", cfg.dim);
    r.field("n_layers", cfg.n_layers);
    r.field("n_heads", cfg.n_heads);
    r.field("max_seq", cfg.max_seq);
    r.field("seed", cfg.seed);
    r.finish();
}

void read_train(const json& j, const std::string& path, TrainConfig& cfg) {
    SectionReader r(j, path);
    r.field("learning_rate", cfg.learning_rate);
    r.field("epochs", cfg.epochs);
    r.field("batch_size", cfg.batch_size);
    r.field("beta1", cfg.beta1);
    r.field("beta2", cfg.beta2);
    r.field("eps", cfg.eps);
    r.field("weight_decay", cfg.weight_decay);
    r.field("grad_clip", cfg.grad_clip);
    r.field("seed", cfg.seed);
    r.finish();
}

json train_to_json(const TrainConfig& cfg) {
    json j;
    j["learning_rate"] = cfg.learning_rate;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["beta1"] = cfg.beta1;
    j["beta2"] = cfg.beta2;
    j["eps"] = cfg.eps;
    j["weight_decay"] = cfg.weight_decay;
    j["grad_clip"] = cfg.grad_clip;
    j["seed"] = cfg.seed;
    return j;
}

json model_to_json(const ModelConfig& cfg) {
    json j;
    j["dim"] = cfg.dim;
    j["n_layers"] = cfg.n_layers;
    j["n_heads"] = cfg.n_heads;
    j["max_seq"] = cfg.max_seq;
    j["seed"] = cfg.seed;
    return j;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (data.tasks.size() < 1) throw ConfigError("data.tasks must name at least one task");
    std::set<std::string> seen;
    for (const auto& t : data.tasks) {
        find_task(t);  // throws on unknown ids
        if (!seen.insert(t).second) throw ConfigError("duplicate task in data.tasks: " + t);
    }
    if (data.train_size < 1 || data.test_size < 1) throw ConfigError("split sizes must be >= 1");
    model.validate();
    extractor.validate();
    pretrain.train.validate();
    adapter.validate();
    adapter_train.validate();
    switch_train.validate();
    if (run.strategy != "switchcit" && run.strategy != "rehearsal" && run.strategy != "seq_peft")
        throw ConfigError("run.strategy must be one of: switchcit, rehearsal, seq_peft");
    if (run.retention_rate <= 0.0 || run.retention_rate > 1.0)
        throw ConfigError("run.retention_rate must be in (0, 1]");
}

ExperimentConfig default_experiment_config() {
    ExperimentConfig cfg;
    cfg.model.dim = 64;
    cfg.model.n_layers = 2;
    cfg.model.n_heads = 4;
    cfg.model.max_seq = 128;
    cfg.model.seed = 1;

    cfg.extractor.dim = 32;
    cfg.extractor.n_layers = 2;
    cfg.extractor.n_heads = 4;
    cfg.extractor.max_seq = 128;
    cfg.extractor.seed = 2;

    cfg.pretrain.train.learning_rate = 1e-3;
    cfg.pretrain.train.epochs = 3;
    cfg.pretrain.train.batch_size = 16;
    cfg.pretrain.train.grad_clip = 1.0;
    cfg.pretrain.train.seed = 31;

    cfg.adapter_train.learning_rate = 2e-3;
    cfg.adapter_train.epochs = 3;
    cfg.adapter_train.batch_size = 16;
    cfg.adapter_train.grad_clip = 1.0;
    cfg.adapter_train.seed = 41;

    cfg.switch_train.seed = 51;
    return cfg;
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config is not valid JSON");

    ExperimentConfig cfg = default_experiment_config();
    SectionReader root(j, "$");
    if (const json* s = root.section("data")) {
        SectionReader r(*s, "data");
        r.field("tasks", cfg.data.tasks);
        r.field("train_size", cfg.data.train_size);
        r.field("test_size", cfg.data.test_size);
        r.field("seed", cfg.data.seed);
        r.finish();
    }
    if (const json* s = root.section("model")) read_model(*s, "model", cfg.model);
    if (const json* s = root.section("extractor")) read_model(*s, "extractor", cfg.extractor);
    if (const json* s = root.section("pretrain")) {
        SectionReader r(*s, "pretrain");
        r.field("corpus_lines", cfg.pretrain.corpus_lines);
        r.field("corpus_seed", cfg.pretrain.corpus_seed);
        if (const json* t = r.section("train")) read_train(*t, "pretrain.train", cfg.pretrain.train);
        r.finish();
    }
    if (const json* s = root.section("adapter")) {
        SectionReader r(*s, "adapter");
        r.field("rank", cfg.adapter.rank);
        r.field("alpha", cfg.adapter.alpha);
        r.field("dropout", cfg.adapter.dropout);
        r.field("targets", cfg.adapter.targets);
        r.finish();
    }
    if (const json* s = root.section("adapter_train"))
        read_train(*s, "adapter_train", cfg.adapter_train);
    if (const json* s = root.section("switch")) {
        SectionReader r(*s, "switch");
        r.field("hidden_dim", cfg.switch_train.hidden_dim);
        r.field("learning_rate", cfg.switch_train.learning_rate);
        r.field("epochs", cfg.switch_train.epochs);
        r.field("batch_size", cfg.switch_train.batch_size);
        r.field("seed", cfg.switch_train.seed);
        r.finish();
    }
    if (const json* s = root.section("run")) {
        SectionReader r(*s, "run");
        r.field("strategy", cfg.run.strategy);
        r.field("retention_rate", cfg.run.retention_rate);
        r.field("seed", cfg.run.seed);
        r.field("oracle_routing", cfg.run.oracle_routing);
        r.finish();
    }
    root.finish();
    cfg.validate();
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    return parse_experiment_config(read_text_file(path));
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["data"]["tasks"] = cfg.data.tasks;
    j["data"]["train_size"] = cfg.data.train_size;
    j["data"]["test_size"] = cfg.data.test_size;
    j["data"]["seed"] = cfg.data.seed;
    j["model"] = model_to_json(cfg.model);
    j["extractor"] = model_to_json(cfg.extractor);
    j["pretrain"]["corpus_lines"] = cfg.pretrain.corpus_lines;
    j["pretrain"]["corpus_seed"] = cfg.pretrain.corpus_seed;
    j["pretrain"]["train"] = train_to_json(cfg.pretrain.train);
    j["adapter"]["rank"] = cfg.adapter.rank;
    j["adapter"]["alpha"] = cfg.adapter.alpha;
    j["adapter"]["dropout"] = cfg.adapter.dropout;
    j["adapter"]["targets"] = cfg.adapter.targets;
    j["adapter_train"] = train_to_json(cfg.adapter_train);
    j["switch"]["hidden_dim"] = cfg.switch_train.hidden_dim;
    j["switch"]["learning_rate"] = cfg.switch_train.learning_rate;
    j["switch"]["epochs"] = cfg.switch_train.epochs;
    j["switch"]["batch_size"] = cfg.switch_train.batch_size;
    j["switch"]["seed"] = cfg.switch_train.seed;
    j["run"]["strategy"] = cfg.run.strategy;
    j["run"]["retention_rate"] = cfg.run.retention_rate;
    j["run"]["seed"] = cfg.run.seed;
    j["run"]["oracle_routing"] = cfg.run.oracle_routing;
    return j.dump(2);
}

}  // namespace scit
