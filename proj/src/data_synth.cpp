#include "tempo/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "tempo/rng.hpp"

namespace tempo::data {

void validate_sequence(const EventSequence& seq, int vocab) {
    if (seq.events.size() != seq.times.size()) {
        throw InputError("sequence: events and times differ in length");
    }
    for (size_t i = 0; i < seq.times.size(); ++i) {
        const double t = seq.times[i];
        if (!std::isfinite(t) || t < 0.0) throw InputError("sequence: times must be finite and non-negative");
        if (i > 0 && t < seq.times[i - 1]) throw InputError("sequence: times not sorted");
    }
    for (int e : seq.events) {
        if (e < 0 || (vocab > 0 && e >= vocab)) {
            throw InputError("sequence: event id " + std::to_string(e) + " outside vocabulary");
        }
    }
}

namespace {

double draw_gap(const GapRuleTask& task, rng::Stream& s) {
    const bool short_branch = s.uniform01() < task.p_short;
    return s.exponential(short_branch ? task.mean_short : task.mean_long);
}

EventSequence make_gap_rule_sequence(const GapRuleTask& task, rng::Stream s) {
    EventSequence seq;
    seq.events.reserve(task.seq_len);
    seq.times.reserve(task.seq_len);
    int e = static_cast<int>(s.below(task.vocab));
    double t = draw_gap(task, s);
    seq.events.push_back(e);
    seq.times.push_back(t);
    for (int i = 1; i < task.seq_len; ++i) {
        const double gap = draw_gap(task, s);
        e = task.next_event(e, gap);
        t += gap;
        seq.events.push_back(e);
        seq.times.push_back(t);
    }
    return seq;
}

} // namespace

SplitDataset generate(const GapRuleTask& task, uint64_t seed) {
    if (task.vocab < 2 || task.seq_len < 2) throw ConfigError("GapRuleTask: vocab and seq_len too small");
    SplitDataset out;
    const int total = task.n_train + task.n_valid + task.n_test;
    for (int idx = 0; idx < total; ++idx) {
        auto s = rng::stream(seed, "gaprule/seq/" + std::to_string(idx));
        auto seq = make_gap_rule_sequence(task, s);
        if (idx < task.n_train) {
            out.train.push_back(std::move(seq));
        } else if (idx < task.n_train + task.n_valid) {
            out.valid.push_back(std::move(seq));
        } else {
            out.test.push_back(std::move(seq));
        }
    }
    return out;
}

Dataset generate_periodic(const PeriodicAttentionTask& task, int count, uint64_t seed) {
    if (task.vocab < 2 || task.period <= 0.0) throw ConfigError("PeriodicAttentionTask: bad parameters");
    Dataset out;
    out.reserve(count);
    const int half = task.vocab / 2;
    for (int idx = 0; idx < count; ++idx) {
        auto s = rng::stream(seed, "periodic/seq/" + std::to_string(idx));
        EventSequence seq;
        double t = 0.0;
        for (int i = 0; i < task.seq_len; ++i) {
            t += s.exponential(task.mean_gap);
            const int regime = task.regime_at(t);
            const int base = regime == 0 ? 0 : half;
            const int width = regime == 0 ? half : task.vocab - half;
            seq.events.push_back(base + static_cast<int>(s.below(width)));
            seq.times.push_back(t);
        }
        out.push_back(std::move(seq));
    }
    return out;
}

double gap_below_threshold_prob(const GapRuleTask& task) {
    const double p_short_hit = 1.0 - std::exp(-task.threshold / task.mean_short);
    const double p_long_hit = 1.0 - std::exp(-task.threshold / task.mean_long);
    return task.p_short * p_short_hit + (1.0 - task.p_short) * p_long_hit;
}

BayesRates bayes_rates(const GapRuleTask& task) {
    BayesRates rates;
    // Both branch rules are bijections (7 is coprime to 20), so observing the
    // gap pins the label exactly.
    rates.with_gaps = 1.0;
    const double p = gap_below_threshold_prob(task);
    rates.without_gaps = std::max(p, 1.0 - p);
    return rates;
}

Dataset load_jsonl(const std::string& path, int vocab, std::vector<std::string>* warnings) {
    std::ifstream in(path);
    if (!in) throw InputError("load_jsonl: cannot open " + path);
    Dataset out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("load_jsonl: line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("events") || !j.contains("times") ||
            !j["events"].is_array() || !j["times"].is_array()) {
            throw ParseError("load_jsonl: line " + std::to_string(line_no) +
                             ": expected {\"events\":[...],\"times\":[...]}");
        }
        EventSequence seq;
        try {
            seq.events = j["events"].get<std::vector<int>>();
            seq.times = j["times"].get<std::vector<double>>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("load_jsonl: line " + std::to_string(line_no) + ": " + e.what());
        }
        try {
            validate_sequence(seq, vocab);
        } catch (const InputError& e) {
            throw InputError("load_jsonl: line " + std::to_string(line_no) + ": " + e.what());
        }
        out.push_back(std::move(seq));
    }
    if (out.empty() && warnings) warnings->push_back("load_jsonl: " + path + " holds no sequences");
    return out;
}

void save_jsonl(const std::string& path, const Dataset& ds) {
    std::ofstream outf(path, std::ios::trunc);
    if (!outf) throw InputError("save_jsonl: cannot open " + path + " for writing");
    for (const auto& seq : ds) {
        nlohmann::json j;
        j["events"] = seq.events;
        j["times"] = seq.times;
        outf << j.dump() << "\n";
    }
}

} // namespace tempo::data
