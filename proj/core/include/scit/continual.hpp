#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scit/config.hpp"
#include "scit/lora.hpp"
#include "scit/metrics.hpp"
#include "scit/switchnet.hpp"
#include "scit/tasks.hpp"

namespace scit {

// Input / output locations for a continual run.
struct RunPaths {
    std::string data_dir;
    std::string model_dir;  // base.sclm, extractor.sclm, tokenizer.json
    std::string run_dir;
};

// Checkpointed state of a continual run, mirrored in manifest.json.
struct RunState {
    std::string strategy;
    double retention_rate = 0.0;
    bool oracle_routing = false;
    uint64_t seed = 0;
    std::vector<std::string> tasks;  // learning order
    std::string data_dir;   // inputs, recorded so route/infer can find them
    std::string model_dir;
    int completed_stages = 0;
    ScoreMatrix scores;
    std::map<std::string, double> ub;  // filled for switchcit (diagonal)
    std::map<std::string, std::string> input_hashes;     // models + datasets
    std::map<std::string, std::string> artifact_hashes;  // produced files, run-dir relative
    double adapter_ratio = 0.0;  // adapter params / base params

    int total_stages() const { return static_cast<int>(tasks.size()); }
    bool complete() const { return completed_stages == total_stages(); }
};

// Retained examples for one task, with features cached at sampling time.
struct RetentionBuffer {
    std::string task_id;
    double rho = 0.0;
    std::vector<Example> examples;
    std::vector<std::vector<float>> features;
};

void save_buffer(const std::string& path, const RetentionBuffer& buffer);
RetentionBuffer load_buffer(const std::string& path);

// Runs (or resumes) the configured strategy. A manifest is written after
// every stage; rerunning with the same inputs continues after the last
// completed stage and ends bit-identical to an uninterrupted run.
// stop_after_stage > 0 stops early (checkpointed), for resume testing.
RunState run_continual(const ExperimentConfig& cfg, const RunPaths& paths,
                       int stop_after_stage = -1);

// Loads manifest.json from a run directory.
RunState load_run_state(const std::string& run_dir);

// Recomputes SHA-256 of every recorded artifact; throws SerializeError on any
// mismatch or missing file.
void verify_run_artifacts(const RunState& state, const std::string& run_dir);

// Trains one fresh adapter per task (same seeds and data as the switchcit
// diagonal) and evaluates it on that task alone. Writes ub.json plus the
// adapters into out_dir.
std::map<std::string, double> compute_upper_bounds(const ExperimentConfig& cfg,
                                                   const RunPaths& paths,
                                                   const std::string& out_dir);

std::map<std::string, double> load_upper_bounds(const std::string& path);

// Renders, greedy-decodes and detokenizes one query against base+adapter.
std::string generate_text(const ModelParamsF& base, const Tokenizer& tok,
                          const std::string& rendered_prompt, int max_new,
                          const AdapterF* adapter);

// Writes metrics/scores.csv, metrics/rg.csv and metrics/report.json for a
// finished run. ub_path empties to the run's own metrics/ub.json.
void emit_report(const std::string& run_dir, const std::string& ub_path = "");

// Stage-level seed derivations (task identity keyed, so upper bounds are
// invariant to the learning order).
uint64_t adapter_init_seed(const ExperimentConfig& cfg, const std::string& task_id);
uint64_t adapter_train_seed(const ExperimentConfig& cfg, const std::string& task_id);
uint64_t buffer_seed(const ExperimentConfig& cfg, const std::string& task_id);

}  // namespace scit
