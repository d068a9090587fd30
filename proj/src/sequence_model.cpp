#include "tempo/sequence_model.hpp"

#include <cmath>

#include <json.hpp>

namespace tempo::model {

std::string embedder_kind_name(EmbedderKind k) {
    switch (k) {
        case EmbedderKind::BochnerNormal: return "bochner-normal";
        case EmbedderKind::BochnerInvCdf: return "bochner-invcdf";
        case EmbedderKind::BochnerNonParam: return "bochner-nonparam";
        case EmbedderKind::Mercer: return "mercer";
        case EmbedderKind::PosEnc: return "posenc";
    }
    return "?";
}

namespace {

EmbedderKind embedder_kind_from_name(const std::string& name) {
    for (auto k : {EmbedderKind::BochnerNormal, EmbedderKind::BochnerInvCdf,
                   EmbedderKind::BochnerNonParam, EmbedderKind::Mercer, EmbedderKind::PosEnc}) {
        if (embedder_kind_name(k) == name) return k;
    }
    throw ConfigError("unknown embedder kind: " + name);
}

} // namespace

int ModelConfig::time_dim() const {
    switch (embedder) {
        case EmbedderKind::BochnerNormal:
        case EmbedderKind::BochnerInvCdf:
        case EmbedderKind::BochnerNonParam:
        case EmbedderKind::PosEnc:
            return 2 * bochner_d;
        case EmbedderKind::Mercer:
            return mercer_k * (2 * mercer_jmax + (mercer_intercept ? 1 : 0));
    }
    return 0;
}

void ModelConfig::validate() const {
    if (vocab_size < 2) throw ConfigError("config: vocab_size must be >= 2");
    if (event_dim < 1) throw ConfigError("config: event_dim must be >= 1");
    if (num_blocks < 1) throw ConfigError("config: num_blocks must be >= 1");
    if (max_seq_len < 2) throw ConfigError("config: max_seq_len must be >= 2");
    if (num_heads < 1 || event_dim % num_heads != 0) {
        throw ConfigError("config: heads must divide the projection dimension");
    }
    if (embedder == EmbedderKind::Mercer) {
        if (mercer_k < 1 || mercer_jmax < 1) throw ConfigError("config: mercer_k and mercer_jmax must be >= 1");
    } else {
        if (bochner_d < 1) throw ConfigError("config: bochner_d must be >= 1");
    }
    if (interaction == Interaction::MlpRelu && mlp_hidden < 1) {
        throw ConfigError("config: mlp_hidden must be >= 1");
    }
    if (n_neg < 0) throw ConfigError("config: n_neg must be >= 0");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("config: dropout must be in [0,1)");
    if (!(tau_min > 0.0) || !(tau_min < tau_max)) throw ConfigError("config: need 0 < tau_min < tau_max");
}

std::string config_to_json(const ModelConfig& cfg) {
    nlohmann::json j;
    j["vocab_size"] = cfg.vocab_size;
    j["event_dim"] = cfg.event_dim;
    j["embedder"] = embedder_kind_name(cfg.embedder);
    j["bochner_d"] = cfg.bochner_d;
    j["mercer_k"] = cfg.mercer_k;
    j["mercer_jmax"] = cfg.mercer_jmax;
    j["mercer_intercept"] = cfg.mercer_intercept;
    j["mercer_tied"] = cfg.mercer_tied;
    j["train_periods"] = cfg.train_periods;
    j["tau_min"] = cfg.tau_min;
    j["tau_max"] = cfg.tau_max;
    j["num_blocks"] = cfg.num_blocks;
    j["num_heads"] = cfg.num_heads;
    j["interaction"] = cfg.interaction == Interaction::Linear ? "linear" : "mlp_relu";
    j["mlp_hidden"] = cfg.mlp_hidden;
    j["max_seq_len"] = cfg.max_seq_len;
    j["n_neg"] = cfg.n_neg;
    j["residual"] = cfg.residual;
    j["dropout"] = cfg.dropout;
    return j.dump();
}

ModelConfig config_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("config_from_json: ") + e.what());
    }
    ModelConfig cfg;
    cfg.vocab_size = j.at("vocab_size").get<int>();
    cfg.event_dim = j.at("event_dim").get<int>();
    cfg.embedder = embedder_kind_from_name(j.at("embedder").get<std::string>());
    cfg.bochner_d = j.at("bochner_d").get<int>();
    cfg.mercer_k = j.at("mercer_k").get<int>();
    cfg.mercer_jmax = j.at("mercer_jmax").get<int>();
    cfg.mercer_intercept = j.at("mercer_intercept").get<bool>();
    cfg.mercer_tied = j.at("mercer_tied").get<bool>();
    cfg.train_periods = j.at("train_periods").get<bool>();
    cfg.tau_min = j.at("tau_min").get<double>();
    cfg.tau_max = j.at("tau_max").get<double>();
    cfg.num_blocks = j.at("num_blocks").get<int>();
    cfg.num_heads = j.at("num_heads").get<int>();
    cfg.interaction = j.at("interaction").get<std::string>() == "linear" ? Interaction::Linear
                                                                         : Interaction::MlpRelu;
    cfg.mlp_hidden = j.at("mlp_hidden").get<int>();
    cfg.max_seq_len = j.at("max_seq_len").get<int>();
    cfg.n_neg = j.at("n_neg").get<int>();
    cfg.residual = j.at("residual").get<bool>();
    cfg.dropout = j.at("dropout").get<double>();
    return cfg;
}

uint64_t config_hash(const ModelConfig& cfg) { return rng::fnv1a64(config_to_json(cfg)); }

namespace {

ad::Tensor glorot(int rows, int cols, rng::Stream& s, const std::string& name) {
    const double a = std::sqrt(6.0 / (rows + cols));
    std::vector<double> d(static_cast<size_t>(rows) * cols);
    for (auto& v : d) v = s.uniform(-a, a);
    return ad::tensor({rows, cols}, std::move(d), true, name);
}

ad::Tensor gauss(int rows, int cols, double stddev, rng::Stream& s, const std::string& name) {
    std::vector<double> d(static_cast<size_t>(rows) * cols);
    for (auto& v : d) v = s.normal(0.0, stddev);
    return ad::tensor({rows, cols}, std::move(d), true, name);
}

ad::Tensor zero_row(int cols, const std::string& name) {
    auto t = ad::zeros({1, cols}, true);
    t->name = name;
    return t;
}

} // namespace

ModelParams init_params(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    ModelParams p;
    p.cfg = cfg;

    auto s_event = rng::stream(seed, "init/event_table");
    p.event_table = gauss(cfg.vocab_size, cfg.event_dim, 0.05, s_event, "model.event_table");

    const int dt = cfg.time_dim();
    if (cfg.embedder == EmbedderKind::PosEnc) {
        auto s_pos = rng::stream(seed, "init/posenc");
        p.posenc = gauss(cfg.max_seq_len, dt, 0.05, s_pos, "model.posenc");
    } else {
        emb::EmbedderConfig ec;
        switch (cfg.embedder) {
            case EmbedderKind::BochnerNormal: ec.family = emb::Family::BochnerNormal; break;
            case EmbedderKind::BochnerInvCdf: ec.family = emb::Family::BochnerInvCdf; break;
            case EmbedderKind::BochnerNonParam: ec.family = emb::Family::BochnerNonParam; break;
            case EmbedderKind::Mercer: ec.family = emb::Family::Mercer; break;
            case EmbedderKind::PosEnc: break;
        }
        ec.d = cfg.bochner_d;
        ec.k = cfg.mercer_k;
        ec.jmax = cfg.mercer_jmax;
        ec.intercept = cfg.mercer_intercept;
        ec.tied = cfg.mercer_tied;
        ec.train_periods = cfg.train_periods;
        ec.tau_min = cfg.tau_min;
        ec.tau_max = cfg.tau_max;
        p.embedder = emb::make_embedder(ec, rng::stream(seed, "init/embedder"));
    }

    const int in_dim = cfg.event_dim + dt;
    const int h = cfg.event_dim;
    auto s_inter = rng::stream(seed, "init/interaction");
    if (cfg.interaction == Interaction::Linear) {
        p.w0 = glorot(in_dim, h, s_inter, "model.inter.w0");
        p.b0 = zero_row(h, "model.inter.b0");
    } else {
        p.w0 = glorot(in_dim, cfg.mlp_hidden, s_inter, "model.inter.w0");
        p.b0 = zero_row(cfg.mlp_hidden, "model.inter.b0");
        p.w1 = glorot(cfg.mlp_hidden, h, s_inter, "model.inter.w1");
        p.b1 = zero_row(h, "model.inter.b1");
        if (cfg.residual) p.wskip = glorot(in_dim, h, s_inter, "model.inter.skip");
    }

    for (int b = 0; b < cfg.num_blocks; ++b) {
        auto s_blk = rng::stream(seed, "init/block" + std::to_string(b));
        BlockParams bp;
        const std::string prefix = "model.block" + std::to_string(b) + ".";
        bp.wq = glorot(h, h, s_blk, prefix + "wq");
        bp.bq = zero_row(h, prefix + "bq");
        bp.wk = glorot(h, h, s_blk, prefix + "wk");
        bp.bk = zero_row(h, prefix + "bk");
        bp.wv = glorot(h, h, s_blk, prefix + "wv");
        bp.bv = zero_row(h, prefix + "bv");
        p.blocks.push_back(std::move(bp));
    }
    return p;
}

std::vector<std::pair<std::string, ad::Tensor>> ModelParams::named_params() const {
    std::vector<std::pair<std::string, ad::Tensor>> out;
    auto push = [&out](const ad::Tensor& t) {
        if (t) out.emplace_back(t->name, t);
    };
    push(event_table);
    push(posenc);
    if (embedder) {
        for (const auto& t : embedder->trainables()) out.emplace_back(t->name, t);
    }
    push(w0);
    push(b0);
    push(w1);
    push(b1);
    push(wskip);
    for (const auto& bp : blocks) {
        push(bp.wq);
        push(bp.bq);
        push(bp.wk);
        push(bp.bk);
        push(bp.wv);
        push(bp.bv);
    }
    return out;
}

std::vector<ad::Tensor> ModelParams::param_list() const {
    std::vector<ad::Tensor> out;
    for (auto& [name, t] : named_params()) out.push_back(t);
    return out;
}

std::pair<double, double> derive_period_range(const data::Dataset& dataset) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (const auto& seq : dataset) {
        for (size_t i = 1; i < seq.times.size(); ++i) {
            const double gap = seq.times[i] - seq.times[i - 1];
            if (gap > 0.0) {
                lo = std::min(lo, gap);
                hi = std::max(hi, gap);
            }
        }
    }
    if (!std::isfinite(lo) || hi <= 0.0) return {0.1, 10.0};
    const double tau_min = std::max(lo, 1e-3);
    const double tau_max = std::max(hi, tau_min * 10.0);
    return {tau_min, tau_max};
}

std::vector<double> lag_transform(const std::vector<double>& times, double target_time) {
    if (!std::isfinite(target_time)) throw InputError("lag_transform: target time is not finite");
    std::vector<double> lags(times.size());
    for (size_t i = 0; i < times.size(); ++i) {
        if (!std::isfinite(times[i])) throw InputError("lag_transform: time is not finite");
        if (times[i] > target_time) {
            throw InputError("lag_transform: target time precedes an event time");
        }
        lags[i] = target_time - times[i];
    }
    return lags;
}

ad::Tensor attention_block(ad::Tape& tape, const ad::Tensor& h, const BlockParams& bp, int num_heads,
                           int max_seq_len, bool residual, std::vector<double>* last_row_attention) {
    const int q = h->rows();
    const int width = h->cols();
    if (q > max_seq_len) {
        throw InputError("attention_block: sequence length " + std::to_string(q) + " exceeds limit " +
                         std::to_string(max_seq_len));
    }
    const int head_dim = width / num_heads;

    auto qm = tape.add_bias_row(tape.matmul(h, bp.wq), bp.bq);
    auto km = tape.add_bias_row(tape.matmul(h, bp.wk), bp.bk);
    auto vm = tape.add_bias_row(tape.matmul(h, bp.wv), bp.bv);

    if (last_row_attention) last_row_attention->assign(q, 0.0);

    std::vector<ad::Tensor> head_outs;
    head_outs.reserve(num_heads);
    for (int hd = 0; hd < num_heads; ++hd) {
        const int c0 = hd * head_dim, c1 = (hd + 1) * head_dim;
        auto qh = num_heads == 1 ? qm : tape.slice(qm, 0, q, c0, c1);
        auto kh = num_heads == 1 ? km : tape.slice(km, 0, q, c0, c1);
        auto vh = num_heads == 1 ? vm : tape.slice(vm, 0, q, c0, c1);
        auto scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), 1.0 / std::sqrt(head_dim));
        auto weights = tape.causal_softmax_rows(scores);
        if (last_row_attention) {
            for (int j = 0; j < q; ++j) {
                (*last_row_attention)[j] += weights->data[(q - 1) * q + j] / num_heads;
            }
        }
        head_outs.push_back(tape.matmul(weights, vh));
    }
    auto out = num_heads == 1 ? head_outs[0] : tape.concat_cols(head_outs);
    return residual ? tape.add(h, out) : out;
}

ForwardResult forward(ad::Tape& tape, const ModelParams& params, const data::EventSequence& prefix,
                      double target_time, rng::Stream* dropout_stream) {
    const auto& cfg = params.cfg;
    const int q = static_cast<int>(prefix.size());
    if (q == 0) throw InputError("forward: empty prefix");
    if (q > cfg.max_seq_len) {
        throw InputError("forward: prefix length " + std::to_string(q) + " exceeds max_seq_len " +
                         std::to_string(cfg.max_seq_len));
    }
    for (int e : prefix.events) {
        if (e < 0 || e >= cfg.vocab_size) throw InputError("forward: unknown event id " + std::to_string(e));
    }

    ad::Tensor time_feats;
    if (cfg.embedder == EmbedderKind::PosEnc) {
        // recency-anchored position indices: the most recent event is index 0
        std::vector<int> pos(q);
        for (int i = 0; i < q; ++i) pos[i] = q - 1 - i;
        time_feats = tape.gather_rows(params.posenc, pos);
    } else {
        const auto lags = lag_transform(prefix.times, target_time);
        auto t_col = ad::tensor({q, 1}, lags);
        time_feats = params.embedder->embed_graph(tape, t_col);
    }

    auto event_rows = tape.gather_rows(params.event_table, prefix.events);
    auto x = tape.concat_cols({event_rows, time_feats});

    ad::Tensor h;
    if (cfg.interaction == Interaction::Linear) {
        h = tape.add_bias_row(tape.matmul(x, params.w0), params.b0);
    } else {
        auto a = tape.relu(tape.add_bias_row(tape.matmul(x, params.w0), params.b0));
        h = tape.add_bias_row(tape.matmul(a, params.w1), params.b1);
        if (cfg.residual) h = tape.add(h, tape.matmul(x, params.wskip));
    }
    if (cfg.dropout > 0.0 && dropout_stream) {
        std::vector<double> mask(h->size());
        const double keep = 1.0 - cfg.dropout;
        for (auto& m : mask) m = dropout_stream->uniform01() < keep ? 1.0 / keep : 0.0;
        h = tape.mul(h, ad::tensor(h->shape, std::move(mask)));
    }

    ForwardResult result;
    for (const auto& bp : params.blocks) {
        result.attention.emplace_back();
        h = attention_block(tape, h, bp, cfg.num_heads, cfg.max_seq_len, cfg.residual,
                            &result.attention.back());
    }

    auto last = tape.slice(h, q - 1, q, 0, cfg.event_dim);
    result.logits = tape.matmul(last, tape.transpose(params.event_table));
    return result;
}

std::vector<std::vector<double>> export_attention(const ModelParams& params,
                                                  const data::EventSequence& seq,
                                                  const std::vector<double>& target_times) {
    if (seq.empty()) throw InputError("export_attention: empty sequence");
    if (target_times.empty()) throw InputError("export_attention: no target times");
    for (size_t i = 0; i < target_times.size(); ++i) {
        if (i > 0 && target_times[i] < target_times[i - 1]) {
            throw InputError("export_attention: target times must be ascending");
        }
        if (target_times[i] < seq.times.back()) {
            throw InputError("export_attention: target time precedes the last event");
        }
    }
    // context = the most recent max_seq_len events
    data::EventSequence window = seq;
    const int L = params.cfg.max_seq_len;
    if (static_cast<int>(window.size()) > L) {
        window.events.assign(seq.events.end() - L, seq.events.end());
        window.times.assign(seq.times.end() - L, seq.times.end());
    }
    std::vector<std::vector<double>> rows;
    rows.reserve(target_times.size());
    for (double tt : target_times) {
        ad::Tape tape;
        tape.set_grad_enabled(false);
        auto res = forward(tape, params, window, tt);
        rows.push_back(res.attention.back());
    }
    return rows;
}

} // namespace tempo::model
