#include "scit/continual.hpp"

#include <algorithm>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "scit/parallel.hpp"
#include "scit/rng.hpp"
#include "scit/serialize.hpp"
#include "scit/train.hpp"

namespace scit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kManifestVersion = 1;

size_t canonical_task_index(const std::string& task_id) {
    const auto& tasks = builtin_tasks();
    for (size_t i = 0; i < tasks.size(); ++i)
        if (tasks[i].task_id == task_id) return i;
    throw ConfigError("unknown task id: " + task_id);
}

}  // namespace

uint64_t adapter_init_seed(const ExperimentConfig& cfg, const std::string& task_id) {
    return mix_seed(cfg.adapter_train.seed, 1000 + canonical_task_index(task_id));
}

uint64_t adapter_train_seed(const ExperimentConfig& cfg, const std::string& task_id) {
    return mix_seed(cfg.adapter_train.seed, 2000 + canonical_task_index(task_id));
}

uint64_t buffer_seed(const ExperimentConfig& cfg, const std::string& task_id) {
    return mix_seed(cfg.data.seed, 3000 + canonical_task_index(task_id));
}

// ---------------------------------------------------------------------------
// buffers
// ---------------------------------------------------------------------------

void save_buffer(const std::string& path, const RetentionBuffer& buffer) {
    std::string text;
    for (size_t i = 0; i < buffer.examples.size(); ++i) {
        const auto& ex = buffer.examples[i];
        json j;
        j["task_id"] = ex.task_id;
        j["instruction"] = ex.instruction;
        j["input"] = ex.input.has_value() ? json(*ex.input) : json(nullptr);
        j["target"] = ex.target;
        j["rho"] = buffer.rho;
        j["feature"] = buffer.features.at(i);
        text += j.dump();
        text += '\n';
    }
    write_text_atomic(path, text);
}

RetentionBuffer load_buffer(const std::string& path) {
    RetentionBuffer buffer;
    const std::string text = read_text_file(path);
    size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
        size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        ++line_no;
        const std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw SerializeError(path + ":" + std::to_string(line_no) + ": malformed JSON");
        Example ex;
        ex.task_id = j.at("task_id").get<std::string>();
        ex.instruction = j.at("instruction").get<std::string>();
        if (!j.at("input").is_null()) ex.input = j.at("input").get<std::string>();
        ex.target = j.at("target").get<std::string>();
        buffer.task_id = ex.task_id;
        buffer.rho = j.at("rho").get<double>();
        buffer.examples.push_back(std::move(ex));
        buffer.features.push_back(j.at("feature").get<std::vector<float>>());
    }
    return buffer;
}

// ---------------------------------------------------------------------------
// manifest
// ---------------------------------------------------------------------------

namespace {

json state_to_json(const RunState& state, const ExperimentConfig& cfg) {
    json j;
    j["manifest_version"] = kManifestVersion;
    j["strategy"] = state.strategy;
    j["retention_rate"] = state.retention_rate;
    j["oracle_routing"] = state.oracle_routing;
    j["seed"] = state.seed;
    j["tasks"] = state.tasks;
    j["paths"]["data_dir"] = state.data_dir;
    j["paths"]["model_dir"] = state.model_dir;
    j["completed_stages"] = state.completed_stages;
    j["total_stages"] = state.total_stages();
    j["config"] = json::parse(experiment_config_to_json(cfg));
    j["inputs"] = state.input_hashes;
    j["artifacts"] = state.artifact_hashes;
    j["scores"] = state.scores.rows;
    j["ub"] = state.ub;
    j["adapter_ratio"] = state.adapter_ratio;
    return j;
}

RunState state_from_json(const json& j) {
    RunState state;
    if (j.at("manifest_version").get<int>() != kManifestVersion)
        throw SerializeError("unsupported manifest version");
    state.strategy = j.at("strategy").get<std::string>();
    state.retention_rate = j.at("retention_rate").get<double>();
    state.oracle_routing = j.at("oracle_routing").get<bool>();
    state.seed = j.at("seed").get<uint64_t>();
    state.tasks = j.at("tasks").get<std::vector<std::string>>();
    state.data_dir = j.at("paths").at("data_dir").get<std::string>();
    state.model_dir = j.at("paths").at("model_dir").get<std::string>();
    state.completed_stages = j.at("completed_stages").get<int>();
    state.scores.tasks = state.tasks;
    state.scores.rows = j.at("scores").get<std::vector<std::vector<double>>>();
    state.ub = j.at("ub").get<std::map<std::string, double>>();
    state.input_hashes = j.at("inputs").get<std::map<std::string, std::string>>();
    state.artifact_hashes = j.at("artifacts").get<std::map<std::string, std::string>>();
    state.adapter_ratio = j.at("adapter_ratio").get<double>();
    state.scores.validate();
    return state;
}

void write_manifest(const std::string& run_dir, const RunState& state,
                    const ExperimentConfig& cfg) {
    write_text_atomic(run_dir + "/manifest.json", state_to_json(state, cfg).dump(2) + "\n");
    // scores.json mirrors the matrix for the reporting pipeline
    json scores;
    scores["tasks"] = state.tasks;
    scores["scores"] = state.scores.rows;
    write_text_atomic(run_dir + "/metrics/scores.json", scores.dump(2) + "\n");
    if (!state.ub.empty()) {
        json ub;
        ub["ub"] = state.ub;
        write_text_atomic(run_dir + "/metrics/ub.json", ub.dump(2) + "\n");
    }
}

}  // namespace

RunState load_run_state(const std::string& run_dir) {
    const json j = json::parse(read_text_file(run_dir + "/manifest.json"));
    return state_from_json(j);
}

void verify_run_artifacts(const RunState& state, const std::string& run_dir) {
    for (const auto& [rel, hex] : state.artifact_hashes) {
        const std::string path = run_dir + "/" + rel;
        if (!fs::exists(path)) throw SerializeError("missing run artifact: " + rel);
        const auto digest = sha256_file(path);
        if (digest.hex() != hex)
            throw SerializeError("artifact hash mismatch for " + rel +
                                 " (file was modified or corrupted)");
    }
}

// ---------------------------------------------------------------------------
// evaluation helpers
// ---------------------------------------------------------------------------

std::string generate_text(const ModelParamsF& base, const Tokenizer& tok,
                          const std::string& rendered_prompt, int max_new,
                          const AdapterF* adapter) {
    const auto prompt_ids = encode_prompt(tok, rendered_prompt);
    const auto out = generate_greedy<float>(base, prompt_ids, max_new, tok.eos_id(), adapter);
    return tok.decode(out);
}

namespace {

struct EvalSetup {
    const ModelParamsF* base = nullptr;
    const Tokenizer* tok = nullptr;
    const FeatureExtractor* extractor = nullptr;          // switchcit only
    const SwitchClassifier* classifier = nullptr;         // switchcit, stage >= 2
    const std::map<std::string, AdapterF>* adapters = nullptr;  // switchcit
    const AdapterF* single_adapter = nullptr;             // baselines
    bool oracle_routing = false;
};

double evaluate_task(const EvalSetup& setup, const TaskSpec& spec,
                     const std::vector<Example>& test) {
    std::vector<double> scores(test.size(), 0.0);
    parallel_for(test.size(), [&](size_t i) {
        const Example& ex = test[i];
        const std::string prompt = render_prompt(spec, ex);
        const AdapterF* adapter = setup.single_adapter;
        if (setup.adapters) {
            std::string routed_task = spec.task_id;
            if (!setup.oracle_routing && setup.classifier) {
                routed_task = classify_text(*setup.classifier, *setup.extractor, prompt).task_id;
            }
            auto it = setup.adapters->find(routed_task);
            if (it == setup.adapters->end())
                throw UnregisteredTaskError("no adapter for routed task '" + routed_task + "'");
            adapter = &it->second;
        }
        const std::string prediction =
            generate_text(*setup.base, *setup.tok, prompt, spec.max_new, adapter);
        scores[i] = score_with(spec.metric, prediction, ex.target);
    });
    double sum = 0.0;
    for (double v : scores) sum += v;
    return test.empty() ? 0.0 : sum / static_cast<double>(test.size());
}

// ---------------------------------------------------------------------------
// the stage loop
// ---------------------------------------------------------------------------

struct RunContext {
    ExperimentConfig cfg;
    RunPaths paths;
    ModelParamsF base;
    Sha256Digest base_hash;
    Tokenizer tok;
    std::optional<FeatureExtractor> extractor;
    std::map<std::string, Splits> splits;                 // per task
    std::map<std::string, AdapterF> adapters;             // switchcit: per task
    std::optional<AdapterF> evolving_adapter;             // baselines
    std::map<std::string, RetentionBuffer> buffers;
    std::optional<SwitchClassifier> classifier;           // latest stage's
};

std::string relpath(const std::string& dir, const std::string& rel) { return dir + "/" + rel; }

void record_artifact(RunState& state, const RunContext& ctx, const std::string& rel) {
    state.artifact_hashes[rel] = sha256_file(relpath(ctx.paths.run_dir, rel)).hex();
}

bool needs_switch_network(const std::string& strategy) { return strategy == "switchcit"; }
bool needs_buffers(const std::string& strategy) {
    return strategy == "switchcit" || strategy == "rehearsal";
}

RetentionBuffer make_buffer(const RunContext& ctx, const std::string& task_id) {
    const auto& spec = find_task(task_id);
    const auto& train = ctx.splits.at(task_id).train;
    RetentionBuffer buffer;
    buffer.task_id = task_id;
    buffer.rho = ctx.cfg.run.retention_rate;
    buffer.examples = sample_retention(train, buffer.rho, buffer_seed(ctx.cfg, task_id));
    buffer.features.resize(buffer.examples.size());
    parallel_for(buffer.examples.size(), [&](size_t i) {
        buffer.features[i] = ctx.extractor->extract(render_prompt(spec, buffer.examples[i]));
    });
    return buffer;
}

SwitchClassifier train_stage_classifier(const RunContext& ctx, const RunState& state, int stage) {
    std::vector<std::vector<float>> features;
    std::vector<int> labels;
    std::vector<std::string> class_tasks;
    for (int k = 0; k < stage; ++k) {
        const std::string& task_id = state.tasks[static_cast<size_t>(k)];
        class_tasks.push_back(task_id);
        const auto& buffer = ctx.buffers.at(task_id);
        for (const auto& f : buffer.features) {
            features.push_back(f);
            labels.push_back(k);
        }
    }
    SwitchTrainConfig cfg = ctx.cfg.switch_train;
    cfg.seed = mix_seed(ctx.cfg.switch_train.seed, static_cast<uint64_t>(stage));
    return train_classifier(features, labels, class_tasks, ctx.extractor->model_hash(), cfg);
}

std::vector<EncodedExample> encode_training_set(const RunContext& ctx, const TaskSpec& spec,
                                                const std::vector<Example>& examples) {
    std::vector<EncodedExample> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) out.push_back(encode_example(ctx.tok, spec, ex));
    return out;
}

void run_stage(RunContext& ctx, RunState& state, int stage) {
    const std::string task_id = state.tasks[static_cast<size_t>(stage - 1)];
    const TaskSpec& spec = find_task(task_id);
    const auto& splits = ctx.splits.at(task_id);

    TrainConfig tcfg = ctx.cfg.adapter_train;
    tcfg.seed = adapter_train_seed(ctx.cfg, task_id);

    if (state.strategy == "switchcit") {
        AdapterF adapter =
            init_adapter<float>(ctx.base, ctx.cfg.adapter, task_id, adapter_init_seed(ctx.cfg, task_id));
        auto data = encode_training_set(ctx, spec, splits.train);
        train_adapter<float>(ctx.base, adapter, data, ctx.cfg.adapter, tcfg);
        const std::string rel = "adapters/" + task_id + ".scit";
        save_adapter(relpath(ctx.paths.run_dir, rel), adapter);
        record_artifact(state, ctx, rel);
        ctx.adapters.emplace(task_id, std::move(adapter));
    } else {
        if (!ctx.evolving_adapter.has_value()) {
            // The baselines' single adapter starts from the first task's
            // init stream, so stage 1 matches switchcit bit-for-bit.
            ctx.evolving_adapter = init_adapter<float>(
                ctx.base, ctx.cfg.adapter, "continual",
                adapter_init_seed(ctx.cfg, state.tasks.front()));
        }
        std::vector<Example> train_examples = splits.train;
        if (state.strategy == "rehearsal") {
            for (int k = 0; k < stage - 1; ++k) {
                const auto& buffer = ctx.buffers.at(state.tasks[static_cast<size_t>(k)]);
                train_examples.insert(train_examples.end(), buffer.examples.begin(),
                                      buffer.examples.end());
            }
        }
        std::vector<EncodedExample> data;
        data.reserve(train_examples.size());
        for (const auto& ex : train_examples)
            data.push_back(encode_example(ctx.tok, find_task(ex.task_id), ex));
        train_adapter<float>(ctx.base, *ctx.evolving_adapter, data, ctx.cfg.adapter, tcfg);
        const std::string rel = "adapters/continual.scit";
        save_adapter(relpath(ctx.paths.run_dir, rel), *ctx.evolving_adapter);
        record_artifact(state, ctx, rel);
    }

    if (needs_buffers(state.strategy)) {
        RetentionBuffer buffer = make_buffer(ctx, task_id);
        const std::string rel = "buffers/" + task_id + ".jsonl";
        save_buffer(relpath(ctx.paths.run_dir, rel), buffer);
        record_artifact(state, ctx, rel);
        ctx.buffers.emplace(task_id, std::move(buffer));
    }

    if (needs_switch_network(state.strategy) && stage >= 2) {
        ctx.classifier = train_stage_classifier(ctx, state, stage);
        const std::string rel = "classifiers/stage" + std::to_string(stage) + ".scsw";
        save_classifier(relpath(ctx.paths.run_dir, rel), *ctx.classifier);
        record_artifact(state, ctx, rel);
    }

    // Evaluate every learned task on its test split.
    EvalSetup setup;
    setup.base = &ctx.base;
    setup.tok = &ctx.tok;
    setup.oracle_routing = state.oracle_routing;
    if (state.strategy == "switchcit") {
        setup.adapters = &ctx.adapters;
        setup.extractor = ctx.extractor.has_value() ? &*ctx.extractor : nullptr;
        setup.classifier = (stage >= 2 && ctx.classifier.has_value()) ? &*ctx.classifier : nullptr;
    } else {
        setup.single_adapter = &*ctx.evolving_adapter;
    }

    std::vector<double> row;
    row.reserve(static_cast<size_t>(stage));
    for (int k = 0; k < stage; ++k) {
        const std::string& eval_task = state.tasks[static_cast<size_t>(k)];
        const TaskSpec& eval_spec = find_task(eval_task);
        row.push_back(evaluate_task(setup, eval_spec, ctx.splits.at(eval_task).test));
    }
    state.scores.rows.push_back(std::move(row));

    if (state.strategy == "switchcit")
        state.ub[task_id] = state.scores.rows.back().back();  // score[t][t], by construction

    state.completed_stages = stage;
}

RunContext load_context(const ExperimentConfig& cfg, const RunPaths& paths, RunState& state) {
    RunContext ctx;
    ctx.cfg = cfg;
    ctx.paths = paths;
    ctx.base = load_model(paths.model_dir + "/base.sclm");
    ctx.base_hash = model_content_hash(ctx.base);
    ctx.tok = Tokenizer::load(paths.model_dir + "/tokenizer.json");
    if (static_cast<int>(ctx.tok.size()) != ctx.base.cfg.vocab_size)
        throw ConfigError("tokenizer and base model disagree on vocab size");

    state.input_hashes["models/base.sclm"] = ctx.base_hash.hex();
    state.input_hashes["models/tokenizer.json"] = ctx.tok.content_hash().hex();
    if (needs_buffers(state.strategy)) {
        ModelParamsF extractor_model = load_model(paths.model_dir + "/extractor.sclm");
        state.input_hashes["models/extractor.sclm"] = model_content_hash(extractor_model).hex();
        ctx.extractor.emplace(std::move(extractor_model), ctx.tok);
    }

    for (const auto& task_id : state.tasks) {
        Splits splits;
        const std::string train_path = paths.data_dir + "/" + task_id + ".train.jsonl";
        const std::string test_path = paths.data_dir + "/" + task_id + ".test.jsonl";
        splits.train = load_jsonl(train_path);
        splits.test = load_jsonl(test_path);
        if (splits.train.empty() || splits.test.empty())
            throw ConfigError("empty dataset for task " + task_id);
        state.input_hashes["data/" + task_id + ".train.jsonl"] = sha256_file(train_path).hex();
        state.input_hashes["data/" + task_id + ".test.jsonl"] = sha256_file(test_path).hex();
        ctx.splits.emplace(task_id, std::move(splits));
    }
    return ctx;
}

// Rebuild in-memory context for a resumed run from the on-disk artifacts.
void restore_progress(RunContext& ctx, const RunState& state) {
    for (int k = 0; k < state.completed_stages; ++k) {
        const std::string& task_id = state.tasks[static_cast<size_t>(k)];
        if (state.strategy == "switchcit") {
            AdapterF adapter =
                load_adapter(relpath(ctx.paths.run_dir, "adapters/" + task_id + ".scit"));
            verify_adapter(ctx.base_hash, adapter);
            ctx.adapters.emplace(task_id, std::move(adapter));
        }
        if (needs_buffers(state.strategy)) {
            ctx.buffers.emplace(
                task_id, load_buffer(relpath(ctx.paths.run_dir, "buffers/" + task_id + ".jsonl")));
        }
    }
    if (state.strategy != "switchcit" && state.completed_stages > 0) {
        ctx.evolving_adapter = load_adapter(relpath(ctx.paths.run_dir, "adapters/continual.scit"));
        verify_adapter(ctx.base_hash, *ctx.evolving_adapter);
    }
    if (state.strategy == "switchcit" && state.completed_stages >= 2) {
        ctx.classifier = load_classifier(relpath(
            ctx.paths.run_dir, "classifiers/stage" + std::to_string(state.completed_stages) + ".scsw"));
        verify_extractor(*ctx.classifier, *ctx.extractor);
    }
}

double compute_adapter_ratio(const RunContext& ctx) {
    const AdapterF probe = init_adapter<float>(ctx.base, ctx.cfg.adapter, "probe", 0);
    return static_cast<double>(probe.param_count()) /
           static_cast<double>(ctx.base.param_count());
}

}  // namespace

RunState run_continual(const ExperimentConfig& cfg, const RunPaths& paths, int stop_after_stage) {
    cfg.validate();

    fs::create_directories(paths.run_dir);
    fs::create_directories(paths.run_dir + "/adapters");
    fs::create_directories(paths.run_dir + "/classifiers");
    fs::create_directories(paths.run_dir + "/buffers");
    fs::create_directories(paths.run_dir + "/metrics");

    RunState state;
    const std::string manifest_path = paths.run_dir + "/manifest.json";
    const bool resuming = fs::exists(manifest_path);
    if (resuming) {
        state = load_run_state(paths.run_dir);
        const json manifest = json::parse(read_text_file(manifest_path));
        if (manifest.at("config") != json::parse(experiment_config_to_json(cfg)))
            throw ConfigError("run directory holds a different experiment config; refusing to resume");
        verify_run_artifacts(state, paths.run_dir);
        if (state.complete()) return state;  // resume on a completed run is a no-op
    } else {
        state.strategy = cfg.run.strategy;
        state.retention_rate = cfg.run.retention_rate;
        state.oracle_routing = cfg.run.oracle_routing;
        state.seed = cfg.run.seed;
        state.tasks = cfg.data.tasks;
        state.scores.tasks = cfg.data.tasks;
        state.data_dir = paths.data_dir;
        state.model_dir = paths.model_dir;
    }

    const auto prev_input_hashes = state.input_hashes;
    RunContext ctx = load_context(cfg, paths, state);
    if (resuming && prev_input_hashes != state.input_hashes)
        throw ConfigError("input models or datasets changed since the run started; refusing to resume");
    if (resuming) restore_progress(ctx, state);
    state.adapter_ratio = compute_adapter_ratio(ctx);

    const int last_stage = (stop_after_stage > 0)
                               ? std::min(stop_after_stage, state.total_stages())
                               : state.total_stages();
    for (int stage = state.completed_stages + 1; stage <= last_stage; ++stage) {
        run_stage(ctx, state, stage);
        write_manifest(paths.run_dir, state, cfg);
    }
    return state;
}

std::map<std::string, double> compute_upper_bounds(const ExperimentConfig& cfg,
                                                   const RunPaths& paths,
                                                   const std::string& out_dir) {
    cfg.validate();
    fs::create_directories(out_dir);
    fs::create_directories(out_dir + "/adapters");

    ModelParamsF base = load_model(paths.model_dir + "/base.sclm");
    Tokenizer tok = Tokenizer::load(paths.model_dir + "/tokenizer.json");

    std::map<std::string, double> ub;
    std::map<std::string, std::string> adapter_hashes;
    for (const auto& task_id : cfg.data.tasks) {
        const TaskSpec& spec = find_task(task_id);
        const auto train = load_jsonl(paths.data_dir + "/" + task_id + ".train.jsonl");
        const auto test = load_jsonl(paths.data_dir + "/" + task_id + ".test.jsonl");

        AdapterF adapter =
            init_adapter<float>(base, cfg.adapter, task_id, adapter_init_seed(cfg, task_id));
        TrainConfig tcfg = cfg.adapter_train;
        tcfg.seed = adapter_train_seed(cfg, task_id);
        std::vector<EncodedExample> data;
        data.reserve(train.size());
        for (const auto& ex : train) data.push_back(encode_example(tok, spec, ex));
        train_adapter<float>(base, adapter, data, cfg.adapter, tcfg);

        const std::string rel = "adapters/" + task_id + ".scit";
        save_adapter(out_dir + "/" + rel, adapter);
        adapter_hashes[rel] = sha256_file(out_dir + "/" + rel).hex();

        EvalSetup setup;
        setup.base = &base;
        setup.tok = &tok;
        setup.single_adapter = &adapter;
        ub[task_id] = evaluate_task(setup, spec, test);
    }

    json j;
    j["config"] = json::parse(experiment_config_to_json(cfg));
    j["ub"] = ub;
    j["adapters"] = adapter_hashes;
    write_text_atomic(out_dir + "/ub.json", j.dump(2) + "\n");
    return ub;
}

std::map<std::string, double> load_upper_bounds(const std::string& path) {
    const json j = json::parse(read_text_file(path));
    return j.at("ub").get<std::map<std::string, double>>();
}

void emit_report(const std::string& run_dir, const std::string& ub_path) {
    RunState state = load_run_state(run_dir);
    if (!state.complete())
        throw ConfigError("run is not complete (" + std::to_string(state.completed_stages) + "/" +
                          std::to_string(state.total_stages()) + " stages); cannot report");

    // Recompute the matrix from the persisted scores.json rather than the
    // manifest, so the reporting path exercises the on-disk schema.
    const json scores_json = json::parse(read_text_file(run_dir + "/metrics/scores.json"));
    ScoreMatrix scores;
    scores.tasks = scores_json.at("tasks").get<std::vector<std::string>>();
    scores.rows = scores_json.at("scores").get<std::vector<std::vector<double>>>();
    scores.validate();

    std::string effective_ub_path = ub_path;
    if (effective_ub_path.empty()) {
        effective_ub_path = run_dir + "/metrics/ub.json";
        if (!fs::exists(effective_ub_path))
            throw UndefinedUpperBoundError(
                "no upper bounds found for this run; compute them with the `ub` command and pass "
                "--ub-dir");
    }
    const auto ub = load_upper_bounds(effective_ub_path);

    const RgMatrix rg = progressive_rg(scores, ub);
    write_text_atomic(run_dir + "/metrics/scores.csv", scores_csv(scores));
    write_text_atomic(run_dir + "/metrics/rg.csv", rg_csv(rg));

    json report;
    report["report_version"] = 1;
    report["strategy"] = state.strategy;
    report["retention_rate"] = state.retention_rate;
    report["oracle_routing"] = state.oracle_routing;
    report["tasks"] = state.tasks;
    report["scores"] = scores.rows;
    report["rg"] = rg.rows;
    report["ub"] = ub;
    report["inputs"] = state.input_hashes;
    report["artifacts"] = state.artifact_hashes;
    report["adapter_ratio"] = state.adapter_ratio;
    const json manifest = json::parse(read_text_file(run_dir + "/manifest.json"));
    report["config"] = manifest.at("config");
    write_text_atomic(run_dir + "/metrics/report.json", report.dump(2) + "\n");
}

}  // namespace scit
