#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tempo/events.hpp"

namespace tempo::data {

/// Next-event task whose label rule is deterministic given the preceding
/// event and the inter-event gap, so the value of observing time is known in
/// closed form.
struct GapRuleTask {
    int vocab = 20;
    double p_short = 0.6;
    double mean_short = 0.5;
    double mean_long = 5.0;
    double threshold = 1.0;
    int seq_len = 64;
    int n_train = 2000;
    int n_valid = 200;
    int n_test = 200;

    int next_event(int prev, double gap) const {
        return gap < threshold ? (prev + 1) % vocab : (7 * prev + 3) % vocab;
    }
};

/// Two latent interest regimes alternating every `period` time units; events
/// are drawn from regime-specific halves of the vocabulary. Used for the
/// qualitative attention-decay exports.
struct PeriodicAttentionTask {
    double period = 10.0;
    int vocab = 10;
    int seq_len = 32;
    double mean_gap = 1.0;

    int regime_at(double t) const { return static_cast<int>(std::floor(t / period)) % 2; }
};

struct SplitDataset {
    Dataset train, valid, test;
};

struct BayesRates {
    double with_gaps = 0.0;
    double without_gaps = 0.0;
};

/// Deterministic dataset given (task, seed); timestamps strictly increasing.
/// Splits are disjoint by construction (partitioned by sequence index).
SplitDataset generate(const GapRuleTask& task, uint64_t seed);

Dataset generate_periodic(const PeriodicAttentionTask& task, int count, uint64_t seed);

/// Probability that a gap drawn from the task mixture falls below threshold.
double gap_below_threshold_prob(const GapRuleTask& task);

/// Best achievable next-event accuracy (observing gaps, ignoring gaps).
BayesRates bayes_rates(const GapRuleTask& task);

/// One sequence per line: {"events":[...],"times":[...]}. Malformed lines
/// raise ParseError naming the line; unsorted times and out-of-vocab ids
/// raise InputError naming the line. An empty file yields an empty dataset
/// plus a warning.
Dataset load_jsonl(const std::string& path, int vocab, std::vector<std::string>* warnings = nullptr);

void save_jsonl(const std::string& path, const Dataset& ds);

} // namespace tempo::data
