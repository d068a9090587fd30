#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "tempo/events.hpp"
#include "tempo/tensor.hpp"
#include "tempo/time_embedding.hpp"

namespace tempo::model {

enum class EmbedderKind { BochnerNormal, BochnerInvCdf, BochnerNonParam, Mercer, PosEnc };
enum class Interaction { Linear, MlpRelu };

std::string embedder_kind_name(EmbedderKind k);

struct ModelConfig {
    int vocab_size = 20;
    int event_dim = 24; // block width; the shared-embedding head scores in this space

    EmbedderKind embedder = EmbedderKind::Mercer;
    int bochner_d = 16; // Bochner sample count (time dim 2d); PosEnc reuses 2d as table width
    int mercer_k = 5;
    int mercer_jmax = 2;
    bool mercer_intercept = true;
    bool mercer_tied = false;
    bool train_periods = false;
    double tau_min = 0.1;
    double tau_max = 50.0;

    int num_blocks = 1;
    int num_heads = 1;
    Interaction interaction = Interaction::MlpRelu;
    int mlp_hidden = 48;
    int max_seq_len = 8;
    int n_neg = 0; // negatives for sampled cross-entropy (when it applies)
    bool residual = true;
    double dropout = 0.0;

    int time_dim() const;
    void validate() const;
};

std::string config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const std::string& json_text);
uint64_t config_hash(const ModelConfig& cfg);

struct BlockParams {
    ad::Tensor wq, bq, wk, bk, wv, bv;
};

struct ModelParams {
    ModelConfig cfg;
    ad::Tensor event_table; // [V, event_dim]; also the output head (shared embeddings)
    std::unique_ptr<emb::TimeEmbedder> embedder; // null for PosEnc
    ad::Tensor posenc;                           // [L, time_dim] for PosEnc
    ad::Tensor w0, b0;   // interaction projection of the concatenated event-time rows
    ad::Tensor w1, b1;   // second MLP layer (MlpRelu only)
    ad::Tensor wskip;    // linear shortcut around the interaction MLP (residual mode)
    std::vector<BlockParams> blocks;

    std::vector<std::pair<std::string, ad::Tensor>> named_params() const;
    std::vector<ad::Tensor> param_list() const;
};

ModelParams init_params(const ModelConfig& cfg, uint64_t seed);

/// Shortest/longest observed consecutive gap in the data, clamped away from
/// zero. Used to initialize the embedding period range when none is given.
std::pair<double, double> derive_period_range(const data::Dataset& dataset);

/// t~_i = target_time - t_i. Pairwise differences are preserved with the sign
/// flipped. Rejects a target earlier than the last event.
std::vector<double> lag_transform(const std::vector<double>& times, double target_time);

struct ForwardResult {
    ad::Tensor logits; // [1, V]
    // Per block: head-averaged attention paid by the last position, length q.
    std::vector<std::vector<double>> attention;
};

/// Per-head causal scaled dot-product attention with residual connection.
/// When `last_row_attention` is given it receives the head-averaged weights
/// of the final row.
ad::Tensor attention_block(ad::Tape& tape, const ad::Tensor& h, const BlockParams& bp, int num_heads,
                           int max_seq_len, bool residual,
                           std::vector<double>* last_row_attention = nullptr);

/// Score all events for the next position of `prefix` at the candidate target
/// time. `dropout_stream` enables the (optional) training-time dropout mask.
ForwardResult forward(ad::Tape& tape, const ModelParams& params, const data::EventSequence& prefix,
                      double target_time, rng::Stream* dropout_stream = nullptr);

/// Final-block attention rows of the last position over ascending target
/// times. Each row sums to 1.
std::vector<std::vector<double>> export_attention(const ModelParams& params,
                                                  const data::EventSequence& seq,
                                                  const std::vector<double>& target_times);

} // namespace tempo::model
