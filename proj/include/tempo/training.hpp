#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tempo/data_synth.hpp"
#include "tempo/sequence_model.hpp"

namespace tempo::train {

enum class Monitor { Accuracy, NdcgAt10 };

struct OptimConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double epsilon = 1e-8;
    int batch_size = 32;
    int max_epochs = 30;
    int patience = 10;
    Monitor monitor = Monitor::Accuracy;

    void validate() const;
};

struct AdamState {
    std::vector<std::vector<double>> m, v;
    int64_t t = 0;

    static AdamState for_params(const std::vector<std::pair<std::string, ad::Tensor>>& params);
};

/// Bias-corrected Adam update in place. NaN gradients abort, naming the
/// parameter. Missing gradient buffers count as zero gradients.
void adam_step(const std::vector<std::pair<std::string, ad::Tensor>>& params, AdamState& state,
               const OptimConfig& cfg);

/// -log softmax(logits)[target], numerically stable. Exposed for tests.
ad::Tensor cross_entropy_from_logits(ad::Tape& tape, const ad::Tensor& logits_row, int target);

enum class LossMode { Auto, Full, Sampled };

/// Mean next-event cross-entropy over every position i >= 1 of every
/// sequence (left-truncated to max_seq_len), predicting event i from the
/// prefix with lag-transformed times anchored at t_i. Auto mode uses the full
/// softmax for vocabularies up to 1000 and sampled cross-entropy with
/// cfg.n_neg uniform negatives beyond that.
ad::Tensor masked_next_event_loss(ad::Tape& tape, const model::ModelParams& params,
                                  const data::Dataset& dataset, const std::vector<int>& indices,
                                  rng::Stream* neg_stream = nullptr, LossMode mode = LossMode::Auto,
                                  rng::Stream* dropout_stream = nullptr, int* position_count = nullptr);

struct MetricReport {
    double accuracy = 0.0;
    double hit5 = 0.0;
    double hit10 = 0.0;
    double ndcg5 = 0.0;
    double ndcg10 = 0.0;
    double loss = 0.0;
};

/// Aggregate ranking metrics from 1-based ranks of the true events plus the
/// matching cross-entropy terms.
MetricReport metrics_from_ranks(const std::vector<int>& ranks, const std::vector<double>& losses);

/// Scores the final event of each sequence from its preceding events.
MetricReport evaluate(const model::ModelParams& params, const data::Dataset& dataset);

struct CheckpointArray {
    std::string name;
    std::vector<int> shape;
    std::vector<double> data;
};

/// Self-describing container: named 64-bit little-endian arrays plus a
/// metadata header (config, hash, epoch, metric, rng states).
struct Checkpoint {
    std::string config_json;
    uint64_t config_hash = 0;
    int64_t epoch = 0;
    double valid_metric = 0.0;
    std::vector<CheckpointArray> arrays;
    std::vector<std::pair<std::string, uint64_t>> rng_states;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

    const CheckpointArray* find(const std::string& name) const;
};

Checkpoint checkpoint_from_params(const model::ModelParams& params, const AdamState& adam,
                                  int64_t epoch, double valid_metric,
                                  const std::vector<std::pair<std::string, uint64_t>>& rng_states);

/// Rebuild a model from a checkpoint; array names and shapes must match the
/// embedded config or the load is rejected.
model::ModelParams params_from_checkpoint(const Checkpoint& ckpt);

/// Restore Adam moments stored alongside the parameters, if present.
AdamState adam_from_checkpoint(const Checkpoint& ckpt,
                               const std::vector<std::pair<std::string, ad::Tensor>>& params);

struct EpochRow {
    int epoch = 0;
    double train_loss = 0.0;
    double valid_metric = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    Checkpoint best;
    MetricReport test;
    std::vector<EpochRow> log;
    int epochs_run = 0;
    int best_epoch = 0;
    bool aborted = false; // diverged; `best` holds the last good state
};

/// Early-stopped Adam training. Stops once the monitored validation metric
/// has not increased for `patience` epochs; test metrics come from the best
/// checkpoint.
TrainResult train(const model::ModelConfig& model_cfg, const OptimConfig& optim_cfg,
                  const data::Dataset& train_set, const data::Dataset& valid_set,
                  const data::Dataset& test_set, uint64_t seed);

double monitored_value(const MetricReport& report, Monitor monitor);

} // namespace tempo::train
