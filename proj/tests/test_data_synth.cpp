#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tempo/data_synth.hpp"
#include "tempo/rng.hpp"

using namespace tempo;
using namespace tempo::data;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "tempo_test_data";
    std::filesystem::create_directories(dir);
    return dir / name;
}

} // namespace

TEST_CASE("generation is deterministic under the seed") {
    GapRuleTask task;
    task.n_train = 12;
    task.n_valid = 3;
    task.n_test = 3;
    const auto a = generate(task, 7);
    const auto b = generate(task, 7);
    REQUIRE(a.train.size() == 12);
    REQUIRE(a.valid.size() == 3);
    REQUIRE(a.test.size() == 3);
    for (size_t i = 0; i < a.train.size(); ++i) {
        CHECK(a.train[i].events == b.train[i].events);
        CHECK(a.train[i].times == b.train[i].times);
    }
    const auto c = generate(task, 8);
    CHECK(a.train[0].events != c.train[0].events);
}

TEST_CASE("generated sequences obey the labeling rule and have increasing times") {
    GapRuleTask task;
    task.n_train = 30;
    task.n_valid = 1;
    task.n_test = 1;
    const auto split = generate(task, 11);
    for (const auto& seq : split.train) {
        validate_sequence(seq, task.vocab);
        for (size_t i = 1; i < seq.size(); ++i) {
            CHECK(seq.times[i] > seq.times[i - 1]);
            const double gap = seq.times[i] - seq.times[i - 1];
            CHECK(seq.events[i] == task.next_event(seq.events[i - 1], gap));
        }
    }
}

TEST_CASE("gap mixture matches its analytic threshold probability") {
    GapRuleTask task;
    // closed form from the two exponential CDFs
    const double p = 0.6 * (1.0 - std::exp(-2.0)) + 0.4 * (1.0 - std::exp(-0.2));
    CHECK(std::fabs(gap_below_threshold_prob(task) - p) <= 1e-15);
    CHECK(p == doctest::Approx(0.5913).epsilon(2e-4));

    auto s = rng::stream(3, "gap-freq");
    const int n = 100000;
    int below = 0;
    for (int i = 0; i < n; ++i) {
        const bool short_branch = s.uniform01() < task.p_short;
        const double gap = s.exponential(short_branch ? task.mean_short : task.mean_long);
        if (gap < task.threshold) ++below;
    }
    const double freq = static_cast<double>(below) / n;
    const double se = std::sqrt(p * (1.0 - p) / n);
    CHECK(std::fabs(freq - p) <= 3.0 * se);
    CHECK(std::fabs(freq - p) <= 0.01);
}

TEST_CASE("bayes rates") {
    GapRuleTask task;
    const auto rates = bayes_rates(task);
    CHECK(rates.with_gaps == 1.0);
    CHECK(rates.without_gaps == doctest::Approx(0.5913).epsilon(2e-4));

    GapRuleTask zero = task;
    zero.threshold = 1e-12;
    CHECK(bayes_rates(zero).without_gaps == doctest::Approx(1.0).epsilon(1e-9));
    GapRuleTask huge = task;
    huge.threshold = 1e9;
    CHECK(bayes_rates(huge).without_gaps == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("splits are disjoint by construction") {
    GapRuleTask task;
    task.n_train = 10;
    task.n_valid = 5;
    task.n_test = 5;
    const auto split = generate(task, 5);
    // sequences are generated from per-index streams, so identical content
    // across splits would mean indices overlapped
    for (const auto& tr : split.train) {
        for (const auto& va : split.valid) CHECK(tr.times != va.times);
        for (const auto& te : split.test) CHECK(tr.times != te.times);
    }
}

TEST_CASE("periodic task emits events from the regime that owns the timestamp") {
    PeriodicAttentionTask task;
    const auto ds = generate_periodic(task, 4, 77);
    REQUIRE(ds.size() == 4);
    for (const auto& seq : ds) {
        validate_sequence(seq, task.vocab);
        for (size_t i = 0; i < seq.size(); ++i) {
            const int regime = task.regime_at(seq.times[i]);
            if (regime == 0) {
                CHECK(seq.events[i] < task.vocab / 2);
            } else {
                CHECK(seq.events[i] >= task.vocab / 2);
            }
        }
    }
}

TEST_CASE("jsonl round trip") {
    const auto path = temp_file("roundtrip.jsonl");
    GapRuleTask task;
    task.n_train = 5;
    task.n_valid = 1;
    task.n_test = 1;
    const auto split = generate(task, 13);
    save_jsonl(path.string(), split.train);
    const auto loaded = load_jsonl(path.string(), task.vocab);
    REQUIRE(loaded.size() == split.train.size());
    for (size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded[i].events == split.train[i].events);
        CHECK(loaded[i].times == split.train[i].times);
    }
}

TEST_CASE("jsonl loader accepts a plain record") {
    const auto path = temp_file("ok.jsonl");
    std::ofstream(path) << R"({"events":[1,2],"times":[0.0,1.5]})" << "\n";
    const auto ds = load_jsonl(path.string(), 10);
    REQUIRE(ds.size() == 1);
    CHECK(ds[0].events == std::vector<int>{1, 2});
    CHECK(ds[0].times == std::vector<double>{0.0, 1.5});
}

TEST_CASE("jsonl loader rejects unsorted times citing the line") {
    const auto path = temp_file("unsorted.jsonl");
    std::ofstream(path) << R"({"events":[1,2],"times":[0.0,1.0]})" << "\n"
                        << R"({"events":[1,2],"times":[2.0,1.0]})" << "\n";
    CHECK_THROWS_WITH_AS(load_jsonl(path.string(), 10), doctest::Contains("line 2"), InputError);
}

TEST_CASE("jsonl loader rejects malformed lines citing the line") {
    const auto path = temp_file("malformed.jsonl");
    std::ofstream(path) << R"({"events":[1,2],"times":[0.0,1.0]})" << "\n"
                        << "{not json}" << "\n";
    CHECK_THROWS_WITH_AS(load_jsonl(path.string(), 10), doctest::Contains("line 2"), ParseError);
}

TEST_CASE("jsonl loader rejects out-of-vocabulary ids") {
    const auto path = temp_file("oov.jsonl");
    std::ofstream(path) << R"({"events":[11],"times":[0.0]})" << "\n";
    CHECK_THROWS_AS(load_jsonl(path.string(), 10), InputError);
    // vocab 0 disables the bound check
    CHECK(load_jsonl(path.string(), 0).size() == 1);
}

TEST_CASE("empty jsonl file yields an empty dataset with a warning") {
    const auto path = temp_file("empty.jsonl");
    std::ofstream(path) << "";
    std::vector<std::string> warnings;
    const auto ds = load_jsonl(path.string(), 10, &warnings);
    CHECK(ds.empty());
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("no sequences") != std::string::npos);
}
