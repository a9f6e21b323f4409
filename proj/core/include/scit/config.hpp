#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scit/model.hpp"
#include "scit/switchnet.hpp"
#include "scit/train.hpp"

namespace scit {

struct DataConfig {
    std::vector<std::string> tasks = {"reverse", "uppercase", "sortletters", "addition", "headline"};
    int train_size = 2000;
    int test_size = 200;
    uint64_t seed = 11;
};

struct PretrainConfig {
    int corpus_lines = 4000;
    uint64_t corpus_seed = 21;
    TrainConfig train;  // applied to both the base model and the extractor
};

struct RunDefaults {
    std::string strategy = "switchcit";
    double retention_rate = 0.01;
    uint64_t seed = 5;
    bool oracle_routing = false;
};

// One config file drives the whole experiment; sections mirror the pipeline.
struct ExperimentConfig {
    DataConfig data;
    ModelConfig model;      // base generator
    ModelConfig extractor;  // switch-network feature extractor
    PretrainConfig pretrain;
    AdapterConfig adapter;
    TrainConfig adapter_train;
    SwitchTrainConfig switch_train;
    RunDefaults run;

    void validate() const;
};

ExperimentConfig default_experiment_config();

// Strict parse: unknown keys anywhere are an error. Missing keys keep their
// defaults.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

// Canonical JSON (sorted keys) used for manifests and --dump-config.
std::string experiment_config_to_json(const ExperimentConfig& cfg);

}  // namespace scit
