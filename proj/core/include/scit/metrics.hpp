#pragma once

#include <map>
#include <string>
#include <vector>

#include "scit/tasks.hpp"

namespace scit {

// Trim plus single-space collapse; applied before every metric so decoding
// artifacts cannot mask equal strings.
std::string normalize_text(const std::string& s);

double exact_match(const std::string& prediction, const std::string& target);
// matched positions / max(len_pred, len_target) over whitespace tokens.
double token_accuracy(const std::string& prediction, const std::string& target);
// Clipped unigram F1. Both sides empty -> 1, one side empty -> 0.
double rouge1_f(const std::string& prediction, const std::string& target);

double score_with(MetricId id, const std::string& prediction, const std::string& target);

struct MetricResult {
    MetricId id;
    std::vector<double> per_example;
    double mean = 0.0;
    size_t count = 0;
};

MetricResult aggregate(MetricId id, const std::vector<double>& per_example);

// s / ub. Throws UndefinedUpperBoundError when ub <= 0.
double relative_gain(double s, double ub);

// score[stage][task] for tasks learned by that stage (lower triangular).
struct ScoreMatrix {
    std::vector<std::string> tasks;            // column order == learning order
    std::vector<std::vector<double>> rows;     // rows[s] has s+1 entries

    void validate() const;
};

struct RgMatrix {
    std::vector<std::string> tasks;
    std::vector<std::vector<double>> rows;
};

RgMatrix progressive_rg(const ScoreMatrix& scores, const std::map<std::string, double>& ub);

// CSV: UTF-8, header row, '.' decimal, 6 fraction digits; blank cells where
// a task was not yet learned. Rows are labeled by the stage's task.
std::string scores_csv(const ScoreMatrix& scores);
std::string rg_csv(const RgMatrix& rg);

}  // namespace scit
