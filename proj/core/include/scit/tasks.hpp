#pragma once

#include <optional>
#include <string>
#include <vector>

#include "scit/model.hpp"
#include "scit/tokenizer.hpp"

namespace scit {

enum class MetricId { exact_match, token_accuracy, rouge1_f };

MetricId metric_from_string(const std::string& s);
std::string metric_to_string(MetricId id);

struct TaskSpec {
    std::string task_id;
    std::string instruction;  // the task's fixed instruction text
    bool has_input = true;
    std::string generator_id;
    MetricId metric = MetricId::exact_match;
    int max_new = 12;
    int train_size = 2000;
    int test_size = 200;
};

struct Example {
    std::string task_id;
    std::string instruction;
    std::optional<std::string> input;
    std::string target;
};

struct Splits {
    std::vector<Example> train;
    std::vector<Example> test;
};

// The five built-in generation tasks, in canonical order. Stage seeds and
// upper-bound seeds key off this order, so it is part of the contract.
const std::vector<TaskSpec>& builtin_tasks();
const TaskSpec& find_task(const std::string& task_id);

// Fixed preamble prepended to every prompt.
const std::string& prompt_preamble();

// preamble ++ " Instruction: " ++ instruction [++ " Input: " ++ input]
// ++ " Response:". The target never appears.
std::string render_prompt(const TaskSpec& spec, const Example& ex);
std::string render_query(const std::string& instruction, const std::optional<std::string>& input);

// Recomputes the ground-truth target for an input; every generated example
// satisfies target == ground_truth(spec, input).
std::string ground_truth(const TaskSpec& spec, const std::string& input);

// Deterministic train/test splits, disjoint as exact prompt strings.
Splits generate_task_data(const TaskSpec& spec, uint64_t seed);

// Uniform sample without replacement of size max(1, round(rho * n)).
std::vector<Example> sample_retention(const std::vector<Example>& train, double rho, uint64_t seed);

// JSONL: one object per line, fields task_id / instruction / input / target
// (input null when absent). Parse errors carry the 1-based line number.
void save_jsonl(const std::string& path, const std::vector<Example>& examples);
std::vector<Example> load_jsonl(const std::string& path);

// Closed alphabet: every word that can occur in prompts, inputs or targets.
std::vector<std::string> vocab_words();

// Generic word-sequence corpus (no instruction formats) used to pretrain the
// base model and the feature extractor.
std::vector<std::string> generate_pretrain_corpus(uint64_t seed, int lines);

// [bos] prompt [sep] / target [eos] framing shared by training and eval.
EncodedExample encode_example(const Tokenizer& tok, const TaskSpec& spec, const Example& ex);
std::vector<int> encode_prompt(const Tokenizer& tok, const std::string& rendered_prompt);

}  // namespace scit
