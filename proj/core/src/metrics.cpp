#include "scit/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <map>
#include <sstream>

#include "scit/errors.hpp"

namespace scit {

std::string normalize_text(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    bool in_space = true;  // leading whitespace is dropped
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_space = true;
            continue;
        }
        if (in_space && !out.empty()) out += ' ';
        in_space = false;
        out += c;
    }
    return out;
}

namespace {

std::vector<std::string> tokens_of(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

}  // namespace

double exact_match(const std::string& prediction, const std::string& target) {
    return normalize_text(prediction) == normalize_text(target) ? 1.0 : 0.0;
}

double token_accuracy(const std::string& prediction, const std::string& target) {
    const auto p = tokens_of(prediction);
    const auto t = tokens_of(target);
    const size_t denom = std::max(p.size(), t.size());
    if (denom == 0) return 1.0;  // both empty
    size_t matched = 0;
    const size_t upto = std::min(p.size(), t.size());
    for (size_t i = 0; i < upto; ++i)
        if (p[i] == t[i]) ++matched;
    return static_cast<double>(matched) / static_cast<double>(denom);
}

double rouge1_f(const std::string& prediction, const std::string& target) {
    const auto p = tokens_of(prediction);
    const auto t = tokens_of(target);
    if (p.empty() && t.empty()) return 1.0;
    if (p.empty() || t.empty()) return 0.0;

    std::map<std::string, size_t> ref_counts;
    for (const auto& w : t) ++ref_counts[w];
    size_t overlap = 0;
    for (const auto& w : p) {
        auto it = ref_counts.find(w);
        if (it != ref_counts.end() && it->second > 0) {
            ++overlap;
            --it->second;  // clipping
        }
    }
    if (overlap == 0) return 0.0;
    const double precision = static_cast<double>(overlap) / static_cast<double>(p.size());
    const double recall = static_cast<double>(overlap) / static_cast<double>(t.size());
    return 2.0 * precision * recall / (precision + recall);
}

double score_with(MetricId id, const std::string& prediction, const std::string& target) {
    switch (id) {
        case MetricId::exact_match: return exact_match(prediction, target);
        case MetricId::token_accuracy: return token_accuracy(prediction, target);
        case MetricId::rouge1_f: return rouge1_f(prediction, target);
    }
    throw ConfigError("invalid metric id");
}

MetricResult aggregate(MetricId id, const std::vector<double>& per_example) {
    MetricResult r;
    r.id = id;
    r.per_example = per_example;
    r.count = per_example.size();
    double sum = 0.0;
    for (double v : per_example) sum += v;
    r.mean = r.count == 0 ? 0.0 : sum / static_cast<double>(r.count);
    return r;
}

double relative_gain(double s, double ub) {
    if (ub <= 0.0)
        throw UndefinedUpperBoundError("relative gain is undefined for upper bound " +
                                       std::to_string(ub));
    return s / ub;
}

void ScoreMatrix::validate() const {
    if (rows.size() > tasks.size()) throw ConfigError("score matrix has more stages than tasks");
    for (size_t s = 0; s < rows.size(); ++s)
        if (rows[s].size() != s + 1)
            throw ConfigError("score matrix row " + std::to_string(s) + " must have " +
                              std::to_string(s + 1) + " entries");
}

RgMatrix progressive_rg(const ScoreMatrix& scores, const std::map<std::string, double>& ub) {
    scores.validate();
    RgMatrix rg;
    rg.tasks = scores.tasks;
    rg.rows.reserve(scores.rows.size());
    for (const auto& row : scores.rows) {
        std::vector<double> out;
        out.reserve(row.size());
        for (size_t t = 0; t < row.size(); ++t) {
            auto it = ub.find(scores.tasks.at(t));
            if (it == ub.end())
                throw UndefinedUpperBoundError("no upper bound for task '" + scores.tasks.at(t) + "'");
            out.push_back(relative_gain(row[t], it->second));
        }
        rg.rows.push_back(std::move(out));
    }
    return rg;
}

namespace {

std::string format_cell(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string matrix_csv(const std::vector<std::string>& tasks,
                       const std::vector<std::vector<double>>& rows) {
    std::string out = "stage";
    for (const auto& t : tasks) {
        out += ',';
        out += t;
    }
    out += '\n';
    for (size_t s = 0; s < rows.size(); ++s) {
        out += tasks.at(s);  // stages are labeled by the task learned at that stage
        for (size_t t = 0; t < tasks.size(); ++t) {
            out += ',';
            if (t < rows[s].size()) out += format_cell(rows[s][t]);
        }
        out += '\n';
    }
    return out;
}

}  // namespace

std::string scores_csv(const ScoreMatrix& scores) { return matrix_csv(scores.tasks, scores.rows); }

std::string rg_csv(const RgMatrix& rg) { return matrix_csv(rg.tasks, rg.rows); }

}  // namespace scit
