// Command-line surface for switch-routed continual instruction tuning:
// data generation, pretraining, continual runs, routing, inference, upper
// bounds and reporting.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "scit/config.hpp"
#include "scit/continual.hpp"
#include "scit/lora.hpp"
#include "scit/metrics.hpp"
#include "scit/model.hpp"
#include "scit/rng.hpp"
#include "scit/serialize.hpp"
#include "scit/switchnet.hpp"
#include "scit/tasks.hpp"
#include "scit/tokenizer.hpp"
#include "scit/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace scit;

namespace {

ExperimentConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return default_experiment_config();
    return load_experiment_config(path);
}

std::vector<EncodedExample> corpus_to_examples(const Tokenizer& tok,
                                               const std::vector<std::string>& lines, int max_seq) {
    std::vector<EncodedExample> out;
    out.reserve(lines.size());
    for (const auto& line : lines) {
        EncodedExample ex;
        ex.prompt.push_back(tok.bos_id());
        ex.target = tok.encode(line);
        if (static_cast<int>(ex.target.size()) > max_seq - 2)
            ex.target.resize(static_cast<size_t>(max_seq - 2));
        if (ex.target.empty()) continue;
        ex.target.push_back(tok.eos_id());
        out.push_back(std::move(ex));
    }
    return out;
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir,
                 std::optional<uint64_t> seed_override) {
    ExperimentConfig cfg = load_config_or_default(config_path);
    if (seed_override.has_value()) cfg.data.seed = *seed_override;
    fs::create_directories(out_dir);

    const Tokenizer tok = Tokenizer::build(vocab_words());
    for (const auto& task_id : cfg.data.tasks) {
        TaskSpec spec = find_task(task_id);
        spec.train_size = cfg.data.train_size;
        spec.test_size = cfg.data.test_size;
        const Splits splits = generate_task_data(spec, cfg.data.seed);
        for (const auto* split : {&splits.train, &splits.test}) {
            for (const auto& ex : *split) {
                const auto enc = encode_example(tok, spec, ex);
                if (static_cast<int>(enc.prompt.size() + enc.target.size()) > cfg.model.max_seq)
                    throw ConfigError("rendered example exceeds max_seq for task " + task_id);
            }
        }
        save_jsonl(out_dir + "/" + task_id + ".train.jsonl", splits.train);
        save_jsonl(out_dir + "/" + task_id + ".test.jsonl", splits.test);
        std::cout << task_id << ": " << splits.train.size() << " train / " << splits.test.size()
                  << " test\n";
    }
    return 0;
}

int cmd_pretrain(const std::string& config_path, const std::string& out_dir) {
    ExperimentConfig cfg = load_config_or_default(config_path);
    fs::create_directories(out_dir);

    Tokenizer tok = Tokenizer::build(vocab_words());
    tok.save(out_dir + "/tokenizer.json");

    const auto corpus = generate_pretrain_corpus(cfg.pretrain.corpus_seed, cfg.pretrain.corpus_lines);

    auto pretrain_one = [&](const char* label, ModelConfig mcfg, uint64_t train_salt,
                            const std::string& filename) {
        mcfg.vocab_size = tok.size();
        ModelParamsF params = init_params<float>(mcfg);
        const auto data = corpus_to_examples(tok, corpus, mcfg.max_seq);
        TrainConfig tcfg = cfg.pretrain.train;
        tcfg.seed = mix_seed(cfg.pretrain.train.seed, train_salt);
        const TrainStats stats = train_lm(params, data, tcfg);
        save_model(out_dir + "/" + filename, params);
        std::cout << label << ": " << params.param_count() << " params, final loss "
                  << (stats.epoch_loss.empty() ? 0.0 : stats.epoch_loss.back()) << ", hash "
                  << model_content_hash(params).hex().substr(0, 12) << "\n";
    };
    pretrain_one("base", cfg.model, 1, "base.sclm");
    pretrain_one("extractor", cfg.extractor, 2, "extractor.sclm");
    return 0;
}

int cmd_run(const std::string& config_path, const std::string& data_dir,
            const std::string& model_dir, const std::string& out_dir,
            const std::string& strategy, std::optional<double> retention,
            std::optional<uint64_t> seed, bool oracle_routing, bool force, int stop_after_stage) {
    ExperimentConfig cfg = load_config_or_default(config_path);
    if (!strategy.empty()) cfg.run.strategy = strategy;
    if (retention.has_value()) cfg.run.retention_rate = *retention;
    if (seed.has_value()) cfg.run.seed = *seed;
    if (oracle_routing) cfg.run.oracle_routing = true;
    cfg.validate();

    const std::string manifest_path = out_dir + "/manifest.json";
    if (fs::exists(manifest_path)) {
        if (force) {
            fs::remove_all(out_dir);
        } else if (load_run_state(out_dir).complete()) {
            std::cerr << "error: " << out_dir
                      << " already holds a completed run; pass --force to overwrite\n";
            return 1;
        }
        // an incomplete run without --force resumes
    }

    RunPaths paths{data_dir, model_dir, out_dir};
    const RunState state = run_continual(cfg, paths, stop_after_stage);
    std::cout << "strategy " << state.strategy << ": " << state.completed_stages << "/"
              << state.total_stages() << " stages";
    if (!state.scores.rows.empty()) {
        std::cout << ", final scores [";
        const auto& last = state.scores.rows.back();
        for (size_t i = 0; i < last.size(); ++i) std::cout << (i ? " " : "") << last[i];
        std::cout << "]";
    }
    std::cout << "\n";
    return 0;
}

int cmd_ub(const std::string& config_path, const std::string& data_dir,
           const std::string& model_dir, const std::string& out_dir) {
    const ExperimentConfig cfg = load_config_or_default(config_path);
    RunPaths paths{data_dir, model_dir, ""};
    const auto ub = compute_upper_bounds(cfg, paths, out_dir);
    for (const auto& [task, value] : ub) std::cout << task << ": " << value << "\n";
    return 0;
}

// Shared by route and infer: load run state, extractor and latest classifier.
struct RoutingSession {
    RunState state;
    Tokenizer tok;
    FeatureExtractor extractor;
    SwitchClassifier classifier;
};

RoutingSession open_routing_session(const std::string& run_dir) {
    RunState state = load_run_state(run_dir);
    if (state.strategy != "switchcit")
        throw ConfigError("routing needs a switchcit run; this run used strategy '" +
                          state.strategy + "'");
    if (state.completed_stages < 2 || state.tasks.size() < 2)
        throw ConfigError(
            "this run has no switch network: routing requires at least 2 learned tasks (the first "
            "stage routes trivially to its only adapter)");

    Tokenizer tok = Tokenizer::load(state.model_dir + "/tokenizer.json");
    ModelParamsF extractor_model = load_model(state.model_dir + "/extractor.sclm");
    FeatureExtractor extractor(std::move(extractor_model), tok);
    SwitchClassifier classifier = load_classifier(
        run_dir + "/classifiers/stage" + std::to_string(state.completed_stages) + ".scsw");
    verify_extractor(classifier, extractor);
    return RoutingSession{std::move(state), std::move(tok), std::move(extractor),
                          std::move(classifier)};
}

int cmd_route(const std::string& run_dir, const std::string& instruction,
              std::optional<std::string> input) {
    RoutingSession s = open_routing_session(run_dir);
    const std::string prompt = render_query(instruction, input);
    const RouteResult r = classify_text(s.classifier, s.extractor, prompt);
    json out;
    out["task_id"] = r.task_id;
    out["probs"] = r.probs;
    std::cout << out.dump() << "\n";
    return 0;
}

int cmd_infer(const std::string& run_dir, const std::string& instruction,
              std::optional<std::string> input, const std::string& audit_log) {
    RoutingSession s = open_routing_session(run_dir);
    const std::string prompt = render_query(instruction, input);
    const RouteResult r = classify_text(s.classifier, s.extractor, prompt);

    const ModelParamsF base = load_model(s.state.model_dir + "/base.sclm");
    AdapterRegistry registry;
    for (const auto& task_id : s.state.tasks)
        registry.add(task_id, run_dir + "/adapters/" + task_id + ".scit");
    // Only the routed task's adapter is ever read from disk.
    const AdapterF& adapter = registry.get(r.task_id, model_content_hash(base));

    const auto& spec = find_task(r.task_id);
    const std::string text = generate_text(base, s.tok, prompt, spec.max_new, &adapter);

    if (!audit_log.empty()) {
        std::string log;
        for (const auto& path : registry.audit_log()) log += path + "\n";
        write_text_atomic(audit_log, log);
    }

    json out;
    out["task_id"] = r.task_id;
    out["probs"] = r.probs;
    out["text"] = text;
    std::cout << out.dump() << "\n";
    return 0;
}

int cmd_report(const std::string& run_dir, const std::string& ub_dir) {
    const std::string ub_path = ub_dir.empty() ? "" : ub_dir + "/ub.json";
    emit_report(run_dir, ub_path);
    std::cout << "wrote " << run_dir << "/metrics/{scores.csv,rg.csv,report.json}\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"switch-routed continual instruction tuning at desk scale"};
    app.require_subcommand(1);

    std::string config_path, out_dir, data_dir = "data", model_dir = "models";
    std::string run_dir, strategy, instruction, ub_dir, audit_log;
    std::optional<std::string> input;
    std::optional<double> retention;
    std::optional<uint64_t> seed;
    bool oracle_routing = false, force = false;
    int stop_after_stage = -1;

    auto* gen = app.add_subcommand("gen-data", "generate task datasets (JSONL)");
    gen->add_option("--config", config_path, "experiment config (JSON)");
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_option("--seed", seed, "override data seed");

    auto* pre = app.add_subcommand("pretrain", "pretrain base model and feature extractor");
    pre->add_option("--config", config_path, "experiment config (JSON)");
    pre->add_option("--out", out_dir, "output directory")->required();

    auto* run = app.add_subcommand("run", "run a continual learning strategy");
    run->add_option("--config", config_path, "experiment config (JSON)");
    run->add_option("--data", data_dir, "dataset directory");
    run->add_option("--models", model_dir, "pretrained model directory");
    run->add_option("--out", out_dir, "run directory")->required();
    run->add_option("--strategy", strategy, "strategy")
        ->check(CLI::IsMember({"switchcit", "rehearsal", "seq_peft"}));
    run->add_option("--retention", retention, "retention rate in (0,1]");
    run->add_option("--seed", seed, "override run seed");
    run->add_flag("--oracle-routing", oracle_routing,
                  "bypass the classifier with ground-truth task labels");
    run->add_flag("--force", force, "overwrite a completed run directory");
    run->add_option("--stop-after-stage", stop_after_stage,
                    "checkpoint and stop after this stage (for resume testing)");

    auto* ub = app.add_subcommand("ub", "compute per-task upper bounds");
    ub->add_option("--config", config_path, "experiment config (JSON)");
    ub->add_option("--data", data_dir, "dataset directory");
    ub->add_option("--models", model_dir, "pretrained model directory");
    ub->add_option("--out", out_dir, "output directory")->required();

    auto* route = app.add_subcommand("route", "classify an instruction and print the routed task");
    route->add_option("--run-dir", run_dir, "completed switchcit run")->required();
    route->add_option("--instruction", instruction, "instruction text")->required();
    route->add_option("--input", input, "optional input text");

    auto* infer = app.add_subcommand("infer", "route an instruction and generate a response");
    infer->add_option("--run-dir", run_dir, "completed switchcit run")->required();
    infer->add_option("--instruction", instruction, "instruction text")->required();
    infer->add_option("--input", input, "optional input text");
    infer->add_option("--audit-log", audit_log, "write loaded artifact paths to this file");

    auto* report = app.add_subcommand("report", "emit scores.csv, rg.csv and report.json");
    report->add_option("--run-dir", run_dir, "run directory")->required();
    report->add_option("--ub-dir", ub_dir, "directory holding ub.json (from the ub command)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // 0 for --help, 2 for usage errors
    }

    try {
        if (gen->parsed()) return cmd_gen_data(config_path, out_dir, seed);
        if (pre->parsed()) return cmd_pretrain(config_path, out_dir);
        if (run->parsed())
            return cmd_run(config_path, data_dir, model_dir, out_dir, strategy, retention, seed,
                           oracle_routing, force, stop_after_stage);
        if (ub->parsed()) return cmd_ub(config_path, data_dir, model_dir, out_dir);
        if (route->parsed()) return cmd_route(run_dir, instruction, input);
        if (infer->parsed()) return cmd_infer(run_dir, instruction, input, audit_log);
        if (report->parsed()) return cmd_report(run_dir, ub_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
