#include "scit/tasks.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "scit/rng.hpp"
#include "scit/serialize.hpp"

namespace scit {

using nlohmann::json;

MetricId metric_from_string(const std::string& s) {
    if (s == "exact_match") return MetricId::exact_match;
    if (s == "token_accuracy") return MetricId::token_accuracy;
    if (s == "rouge1_f") return MetricId::rouge1_f;
    throw ConfigError("unknown metric id: " + s);
}

std::string metric_to_string(MetricId id) {
    switch (id) {
        case MetricId::exact_match: return "exact_match";
        case MetricId::token_accuracy: return "token_accuracy";
        case MetricId::rouge1_f: return "rouge1_f";
    }
    throw ConfigError("invalid metric id");
}

namespace {

// Per-task word pools. Kept disjoint on purpose: real task suites also differ
// in input distribution, and the overlap would make nothing easier to learn.
const std::vector<std::string> kReverseWords = {
    "sun", "moon", "star", "tree", "rock", "bird", "fish", "wind",
    "rain", "snow", "leaf", "wolf", "bear", "fox"};

const std::vector<std::string> kUppercaseWords = {
    "red", "blue", "green", "gold", "pink", "gray", "teal", "cyan",
    "ruby", "jade", "plum", "rose"};

const std::vector<std::string> kSortWords = {
    "cab", "bed", "fig", "hat", "jam", "kit", "log", "map",
    "net", "owl", "pet", "rug", "saw", "tub", "zip", "cod"};

const std::vector<std::string> kHeadlineWords = {
    "market", "crisis", "summit", "deal", "storm", "league",
    "title", "record", "launch", "probe", "strike", "merger"};

std::string to_upper(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

std::string sort_letters(const std::string& s) {
    std::string out = s;
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> split_words(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

std::string join_words(const std::vector<std::string>& words) {
    std::string out;
    for (size_t i = 0; i < words.size(); ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    return out;
}

}  // namespace

const std::vector<TaskSpec>& builtin_tasks() {
    static const std::vector<TaskSpec> kTasks = {
        {"reverse", "Reverse the order of the words", true, "reverse", MetricId::exact_match, 12,
         2000, 200},
        {"uppercase", "Rewrite each word in uppercase letters", true, "uppercase",
         MetricId::token_accuracy, 12, 2000, 200},
        {"sortletters", "Sort the letters of each word alphabetically", true, "sortletters",
         MetricId::token_accuracy, 12, 2000, 200},
        {"addition", "Add the two numbers and write the sum", true, "addition",
         MetricId::exact_match, 8, 2000, 200},
        {"headline", "Write a headline that uses all the keywords in order", true, "headline",
         MetricId::rouge1_f, 12, 2000, 200},
    };
    return kTasks;
}

const TaskSpec& find_task(const std::string& task_id) {
    for (const auto& t : builtin_tasks())
        if (t.task_id == task_id) return t;
    throw ConfigError("unknown task id: " + task_id);
}

const std::string& prompt_preamble() {
    static const std::string kPreamble = "Below is an instruction that describes a task";
    return kPreamble;
}

std::string render_query(const std::string& instruction, const std::optional<std::string>& input) {
    std::string out = prompt_preamble();
    out += " Instruction: ";
    out += instruction;
    if (input.has_value()) {
        out += " Input: ";
        out += *input;
    }
    out += " Response:";
    return out;
}

std::string render_prompt(const TaskSpec& spec, const Example& ex) {
    if (ex.task_id != spec.task_id)
        throw ConfigError("example belongs to task '" + ex.task_id + "', not '" + spec.task_id + "'");
    return render_query(ex.instruction, spec.has_input ? ex.input : std::nullopt);
}

std::string ground_truth(const TaskSpec& spec, const std::string& input) {
    const auto words = split_words(input);
    if (spec.generator_id == "reverse") {
        std::vector<std::string> rev(words.rbegin(), words.rend());
        return join_words(rev);
    }
    if (spec.generator_id == "uppercase") {
        std::vector<std::string> out;
        out.reserve(words.size());
        for (const auto& w : words) out.push_back(to_upper(w));
        return join_words(out);
    }
    if (spec.generator_id == "sortletters") {
        std::vector<std::string> out;
        out.reserve(words.size());
        for (const auto& w : words) out.push_back(sort_letters(w));
        return join_words(out);
    }
    if (spec.generator_id == "addition") {
        if (words.size() != 3 || words[1] != "+")
            throw ConfigError("addition input must look like 'A + B', got: " + input);
        return std::to_string(std::stol(words[0]) + std::stol(words[2]));
    }
    if (spec.generator_id == "headline") {
        return join_words(words);  // the headline is the keywords, in order
    }
    throw ConfigError("unknown generator id: " + spec.generator_id);
}

namespace {

std::string draw_input(const std::string& generator_id, Rng& rng) {
    if (generator_id == "reverse") {
        const int k = rng.range(2, 4);
        std::vector<std::string> ws;
        for (int i = 0; i < k; ++i)
            ws.push_back(kReverseWords[static_cast<size_t>(rng.below(kReverseWords.size()))]);
        return join_words(ws);
    }
    if (generator_id == "uppercase") {
        const int k = rng.range(2, 4);
        std::vector<std::string> ws;
        for (int i = 0; i < k; ++i)
            ws.push_back(kUppercaseWords[static_cast<size_t>(rng.below(kUppercaseWords.size()))]);
        return join_words(ws);
    }
    if (generator_id == "sortletters") {
        const int k = rng.range(2, 3);
        std::vector<std::string> ws;
        for (int i = 0; i < k; ++i)
            ws.push_back(kSortWords[static_cast<size_t>(rng.below(kSortWords.size()))]);
        return join_words(ws);
    }
    if (generator_id == "addition") {
        const int a = rng.range(10, 69);
        const int b = rng.range(10, 69);
        return std::to_string(a) + " + " + std::to_string(b);
    }
    if (generator_id == "headline") {
        const int k = rng.range(2, 4);
        std::vector<std::string> pool = kHeadlineWords;
        // partial Fisher-Yates: the first k entries form the draw
        for (int i = 0; i < k; ++i) {
            const size_t j = static_cast<size_t>(i) + static_cast<size_t>(rng.below(pool.size() - static_cast<size_t>(i)));
            std::swap(pool[static_cast<size_t>(i)], pool[j]);
        }
        pool.resize(static_cast<size_t>(k));
        return join_words(pool);
    }
    throw ConfigError("unknown generator id: " + generator_id);
}

}  // namespace

Splits generate_task_data(const TaskSpec& spec, uint64_t seed) {
    if (spec.train_size < 1 || spec.test_size < 1)
        throw ConfigError("split sizes must be >= 1");
    Rng rng(mix_seed(seed, sha256(spec.task_id.data(), spec.task_id.size()).bytes[0]));
    std::set<std::string> seen;
    Splits splits;
    const size_t total = static_cast<size_t>(spec.train_size) + static_cast<size_t>(spec.test_size);
    size_t attempts = 0;
    while (seen.size() < total) {
        if (++attempts > total * 1000)
            throw ConfigError("task '" + spec.task_id + "' cannot produce " + std::to_string(total) +
                              " distinct examples");
        const std::string input = draw_input(spec.generator_id, rng);
        if (!seen.insert(input).second) continue;
        Example ex;
        ex.task_id = spec.task_id;
        ex.instruction = spec.instruction;
        ex.input = input;
        ex.target = ground_truth(spec, input);
        if (seen.size() <= static_cast<size_t>(spec.train_size))
            splits.train.push_back(std::move(ex));
        else
            splits.test.push_back(std::move(ex));
    }
    return splits;
}

std::vector<Example> sample_retention(const std::vector<Example>& train, double rho, uint64_t seed) {
    if (rho <= 0.0 || rho > 1.0) throw ConfigError("retention rate must be in (0, 1]");
    const size_t n = train.size();
    const size_t want = std::max<size_t>(
        1, static_cast<size_t>(std::llround(rho * static_cast<double>(n))));
    if (want >= n) return train;

    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(seed);
    // partial Fisher-Yates, first `want` entries
    for (size_t i = 0; i < want; ++i) {
        const size_t j = i + static_cast<size_t>(rng.below(n - i));
        std::swap(idx[i], idx[j]);
    }
    std::vector<Example> out;
    out.reserve(want);
    for (size_t i = 0; i < want; ++i) out.push_back(train[idx[i]]);
    return out;
}

void save_jsonl(const std::string& path, const std::vector<Example>& examples) {
    std::string text;
    for (const auto& ex : examples) {
        json j;
        j["task_id"] = ex.task_id;
        j["instruction"] = ex.instruction;
        j["input"] = ex.input.has_value() ? json(*ex.input) : json(nullptr);
        j["target"] = ex.target;
        text += j.dump();
        text += '\n';
    }
    write_text_atomic(path, text);
}

std::vector<Example> load_jsonl(const std::string& path) {
    const std::string text = read_text_file(path);
    std::vector<Example> out;
    size_t line_no = 0;
    size_t pos = 0;
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
        try {
            ex.task_id = j.at("task_id").get<std::string>();
            ex.instruction = j.at("instruction").get<std::string>();
            if (!j.at("input").is_null()) ex.input = j.at("input").get<std::string>();
            ex.target = j.at("target").get<std::string>();
        } catch (const json::exception& e) {
            throw SerializeError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<std::string> vocab_words() {
    std::vector<std::string> words;
    auto add = [&](const std::vector<std::string>& more) {
        words.insert(words.end(), more.begin(), more.end());
    };
    // prompt scaffolding
    add(split_words(prompt_preamble()));
    words.push_back("Instruction:");
    words.push_back("Input:");
    words.push_back("Response:");
    for (const auto& t : builtin_tasks()) add(split_words(t.instruction));
    // task lexicons and their transformed forms
    add(kReverseWords);
    add(kUppercaseWords);
    for (const auto& w : kUppercaseWords) words.push_back(to_upper(w));
    add(kSortWords);
    for (const auto& w : kSortWords) words.push_back(sort_letters(w));
    add(kHeadlineWords);
    // characters for digit sequences, operators and corpus anchors
    for (char c = '0'; c <= '9'; ++c) words.push_back(std::string(1, c));
    for (const char* w : {"+", "=", ":", ";", "!", "?"}) words.push_back(w);
    return words;
}

std::vector<std::string> generate_pretrain_corpus(uint64_t seed, int lines) {
    if (lines < 1) throw ConfigError("corpus must have at least one line");
    const auto words = vocab_words();
    Rng rng(mix_seed(seed, 0xC0DEULL));

    auto random_word = [&]() -> const std::string& {
        return words[static_cast<size_t>(rng.below(words.size()))];
    };
    // Structured segments sit behind a random-length prefix so the induced
    // copy circuits are position-relative, not anchored to the line start.
    auto prefix = [&](std::vector<std::string>& ws) {
        const int p = rng.range(0, 6);
        for (int j = 0; j < p; ++j) ws.push_back(random_word());
    };

    std::vector<std::string> out;
    out.reserve(static_cast<size_t>(lines));
    for (int i = 0; i < lines; ++i) {
        const int flavor = static_cast<int>(rng.below(8));
        std::vector<std::string> ws;
        if (flavor == 0) {
            // plain word salad
            const int k = rng.range(4, 10);
            for (int j = 0; j < k; ++j) ws.push_back(random_word());
        } else if (flavor <= 2) {
            // echoed segment behind a ':' anchor: copying from earlier context
            const int k = rng.range(2, 5);
            std::vector<std::string> seg;
            for (int j = 0; j < k; ++j) seg.push_back(random_word());
            prefix(ws);
            ws.insert(ws.end(), seg.begin(), seg.end());
            ws.push_back(":");
            ws.insert(ws.end(), seg.begin(), seg.end());
        } else if (flavor <= 4) {
            // mirrored segment behind a ';' anchor: position-reversed copying
            const int k = rng.range(2, 5);
            std::vector<std::string> seg;
            for (int j = 0; j < k; ++j) seg.push_back(random_word());
            prefix(ws);
            ws.insert(ws.end(), seg.begin(), seg.end());
            ws.push_back(";");
            ws.insert(ws.end(), seg.rbegin(), seg.rend());
        } else if (flavor == 5) {
            // related-form pairs: ties words to their case/sorted variants
            const int k = rng.range(2, 3);
            for (int j = 0; j < k; ++j) {
                if (rng.below(2) == 0) {
                    const auto& w = kUppercaseWords[static_cast<size_t>(rng.below(kUppercaseWords.size()))];
                    ws.push_back(w);
                    ws.push_back(to_upper(w));
                } else {
                    const auto& w = kSortWords[static_cast<size_t>(rng.below(kSortWords.size()))];
                    ws.push_back(w);
                    ws.push_back(sort_letters(w));
                }
            }
        } else if (flavor == 6) {
            // mapped echo: segment of base words, then the segment transformed
            const bool upper = rng.below(2) == 0;
            const auto& pool = upper ? kUppercaseWords : kSortWords;
            const int k = rng.range(2, 4);
            std::vector<std::string> seg;
            for (int j = 0; j < k; ++j)
                seg.push_back(pool[static_cast<size_t>(rng.below(pool.size()))]);
            prefix(ws);
            ws.insert(ws.end(), seg.begin(), seg.end());
            ws.push_back(upper ? "!" : "?");
            for (const auto& w : seg) ws.push_back(upper ? to_upper(w) : sort_letters(w));
        } else {
            // digit strings with sums: numeric adjacency
            const int a = rng.range(10, 69);
            const int b = rng.range(10, 69);
            prefix(ws);
            ws.push_back(std::to_string(a));
            ws.push_back("+");
            ws.push_back(std::to_string(b));
            ws.push_back("=");
            ws.push_back(std::to_string(a + b));
        }
        out.push_back(join_words(ws));
    }
    return out;
}

EncodedExample encode_example(const Tokenizer& tok, const TaskSpec& spec, const Example& ex) {
    EncodedExample enc;
    enc.prompt.push_back(tok.bos_id());
    const auto prompt_ids = tok.encode(render_prompt(spec, ex));
    enc.prompt.insert(enc.prompt.end(), prompt_ids.begin(), prompt_ids.end());
    enc.prompt.push_back(tok.sep_id());
    enc.target = tok.encode(ex.target);
    enc.target.push_back(tok.eos_id());
    return enc;
}

std::vector<int> encode_prompt(const Tokenizer& tok, const std::string& rendered_prompt) {
    std::vector<int> ids;
    ids.push_back(tok.bos_id());
    const auto prompt_ids = tok.encode(rendered_prompt);
    ids.insert(ids.end(), prompt_ids.begin(), prompt_ids.end());
    ids.push_back(tok.sep_id());
    return ids;
}

}  // namespace scit
