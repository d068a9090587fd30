#include "tempo/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace tempo::train {

void OptimConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("optim: learning_rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("optim: beta1 must lie in (0,1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("optim: beta2 must lie in (0,1)");
    if (!(epsilon > 0.0)) throw ConfigError("optim: epsilon must be positive");
    if (batch_size < 1) throw ConfigError("optim: batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("optim: max_epochs must be >= 1");
    if (patience < 1) throw ConfigError("optim: patience must be >= 1");
}

AdamState AdamState::for_params(const std::vector<std::pair<std::string, ad::Tensor>>& params) {
    AdamState st;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const auto& [name, p] : params) {
        st.m.emplace_back(p->size(), 0.0);
        st.v.emplace_back(p->size(), 0.0);
    }
    return st;
}

void adam_step(const std::vector<std::pair<std::string, ad::Tensor>>& params, AdamState& state,
               const OptimConfig& cfg) {
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ContractError("adam_step: state does not match the parameter list");
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& [name, p] = params[i];
        if (state.m[i].size() != p->size()) {
            throw ContractError("adam_step: moment shape differs from parameter '" + name + "'");
        }
        const bool has_grad = !p->grad.empty();
        if (has_grad && p->grad.size() != p->size()) {
            throw ContractError("adam_step: gradient shape differs from parameter '" + name + "'");
        }
        double* m = state.m[i].data();
        double* v = state.v[i].data();
        double* x = p->data.data();
        for (size_t j = 0; j < p->size(); ++j) {
            const double g = has_grad ? p->grad[j] : 0.0;
            if (std::isnan(g)) {
                throw NumericError("adam_step: NaN gradient in parameter '" + name + "'");
            }
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            x[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
    }
}

ad::Tensor cross_entropy_from_logits(ad::Tape& tape, const ad::Tensor& logits_row, int target) {
    const int n = logits_row->cols();
    if (target < 0 || target >= n) throw ContractError("cross_entropy: target outside logits");
    auto probs = tape.softmax_rows(logits_row);
    std::vector<double> onehot(n, 0.0);
    onehot[target] = 1.0;
    auto picked = tape.matmul(tape.mul(probs, ad::tensor({1, n}, std::move(onehot))),
                              ad::full({n, 1}, 1.0));
    return tape.scale(tape.log(picked), -1.0);
}

namespace {

/// Uniform negatives without replacement, excluding the true event.
std::vector<int> sample_candidates(int vocab, int target, int n_neg, rng::Stream& s) {
    if (n_neg < 1 || n_neg > vocab - 1) {
        throw ConfigError("sampled cross-entropy: n_neg must lie in [1, vocab-1]");
    }
    std::vector<int> cands;
    cands.reserve(n_neg + 1);
    cands.push_back(target);
    std::vector<char> used(vocab, 0);
    used[target] = 1;
    while (static_cast<int>(cands.size()) < n_neg + 1) {
        const int c = static_cast<int>(s.below(vocab));
        if (!used[c]) {
            used[c] = 1;
            cands.push_back(c);
        }
    }
    return cands;
}

ad::Tensor sampled_ce(ad::Tape& tape, const ad::Tensor& logits_row, const std::vector<int>& cands) {
    const int n = logits_row->cols();
    const int c = static_cast<int>(cands.size());
    std::vector<double> sel(static_cast<size_t>(n) * c, 0.0);
    for (int j = 0; j < c; ++j) sel[static_cast<size_t>(cands[j]) * c + j] = 1.0;
    auto cand_logits = tape.matmul(logits_row, ad::tensor({n, c}, std::move(sel)));
    return cross_entropy_from_logits(tape, cand_logits, 0); // true event sits at slot 0
}

void truncate_to_window(const data::EventSequence& seq, int max_len, data::EventSequence& out) {
    const int len = static_cast<int>(seq.size());
    const int keep = std::min(len, max_len);
    out.events.assign(seq.events.end() - keep, seq.events.end());
    out.times.assign(seq.times.end() - keep, seq.times.end());
}

} // namespace

ad::Tensor masked_next_event_loss(ad::Tape& tape, const model::ModelParams& params,
                                  const data::Dataset& dataset, const std::vector<int>& indices,
                                  rng::Stream* neg_stream, LossMode mode,
                                  rng::Stream* dropout_stream, int* position_count) {
    if (indices.empty()) throw InputError("masked_next_event_loss: empty batch");
    const auto& cfg = params.cfg;
    bool sampled = mode == LossMode::Sampled || (mode == LossMode::Auto && cfg.vocab_size > 1000);
    if (sampled && cfg.n_neg <= 0) {
        throw ConfigError("masked_next_event_loss: sampled mode requires n_neg > 0");
    }
    if (sampled && !neg_stream) {
        throw ContractError("masked_next_event_loss: sampled mode needs a negative-sampling stream");
    }

    ad::Tensor total;
    int count = 0;
    data::EventSequence window, prefix;
    for (int idx : indices) {
        if (idx < 0 || idx >= static_cast<int>(dataset.size())) {
            throw InputError("masked_next_event_loss: batch index out of range");
        }
        truncate_to_window(dataset[idx], cfg.max_seq_len, window);
        const int len = static_cast<int>(window.size());
        for (int i = 1; i < len; ++i) {
            prefix.events.assign(window.events.begin(), window.events.begin() + i);
            prefix.times.assign(window.times.begin(), window.times.begin() + i);
            auto res = forward(tape, params, prefix, window.times[i], dropout_stream);
            ad::Tensor ce;
            if (sampled) {
                auto cands = sample_candidates(cfg.vocab_size, window.events[i], cfg.n_neg, *neg_stream);
                ce = sampled_ce(tape, res.logits, cands);
            } else {
                ce = cross_entropy_from_logits(tape, res.logits, window.events[i]);
            }
            total = total ? tape.add(total, ce) : ce;
            ++count;
        }
    }
    if (count == 0) throw InputError("masked_next_event_loss: batch holds no scorable positions");
    if (position_count) *position_count = count;
    return tape.scale(total, 1.0 / count);
}

namespace {

struct RankedScore {
    int rank = 0;        // 1-based, ties broken toward earlier ids
    double log_prob = 0; // log softmax probability of the true event
};

RankedScore rank_true_event(const std::vector<double>& logits, int target) {
    RankedScore rs;
    const double lt = logits[target];
    int rank = 1;
    for (size_t j = 0; j < logits.size(); ++j) {
        if (static_cast<int>(j) == target) continue;
        if (logits[j] > lt || (logits[j] == lt && static_cast<int>(j) < target)) ++rank;
    }
    rs.rank = rank;
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double denom = 0.0;
    for (double v : logits) denom += std::exp(v - mx);
    rs.log_prob = (lt - mx) - std::log(denom);
    return rs;
}

} // namespace

MetricReport metrics_from_ranks(const std::vector<int>& ranks, const std::vector<double>& losses) {
    if (ranks.empty() || ranks.size() != losses.size()) {
        throw ContractError("metrics_from_ranks: ranks and losses must be non-empty and aligned");
    }
    MetricReport rep;
    for (size_t i = 0; i < ranks.size(); ++i) {
        const int rank = ranks[i];
        rep.accuracy += rank == 1 ? 1.0 : 0.0;
        rep.hit5 += rank <= 5 ? 1.0 : 0.0;
        rep.hit10 += rank <= 10 ? 1.0 : 0.0;
        rep.ndcg5 += rank <= 5 ? 1.0 / std::log2(rank + 1.0) : 0.0;
        rep.ndcg10 += rank <= 10 ? 1.0 / std::log2(rank + 1.0) : 0.0;
        rep.loss += losses[i];
    }
    const double n = static_cast<double>(ranks.size());
    rep.accuracy /= n;
    rep.hit5 /= n;
    rep.hit10 /= n;
    rep.ndcg5 /= n;
    rep.ndcg10 /= n;
    rep.loss /= n;
    return rep;
}

MetricReport evaluate(const model::ModelParams& params, const data::Dataset& dataset) {
    if (dataset.empty()) throw InputError("evaluate: empty dataset");
    const auto& cfg = params.cfg;
    std::vector<int> ranks;
    std::vector<double> losses;
    data::EventSequence prefix;
    for (const auto& seq : dataset) {
        if (seq.size() < 2) continue;
        const int len = static_cast<int>(seq.size());
        const int keep = std::min(len - 1, cfg.max_seq_len);
        prefix.events.assign(seq.events.end() - 1 - keep, seq.events.end() - 1);
        prefix.times.assign(seq.times.end() - 1 - keep, seq.times.end() - 1);
        ad::Tape tape;
        tape.set_grad_enabled(false);
        auto res = forward(tape, params, prefix, seq.times.back());
        const auto rs = rank_true_event(res.logits->data, seq.events.back());
        ranks.push_back(rs.rank);
        losses.push_back(-rs.log_prob);
    }
    if (ranks.empty()) throw InputError("evaluate: no sequence has at least two events");
    return metrics_from_ranks(ranks, losses);
}

double monitored_value(const MetricReport& report, Monitor monitor) {
    return monitor == Monitor::Accuracy ? report.accuracy : report.ndcg10;
}

// ---------------------------------------------------------------------------
// checkpoint io

namespace {

constexpr char kMagic[8] = {'T', 'E', 'M', 'P', 'O', 'C', 'K', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw ParseError("checkpoint: truncated file");
    return v;
}

void write_string(std::ostream& os, const std::string& s) {
    write_pod<uint32_t>(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
    const auto len = read_pod<uint32_t>(is);
    std::string s(len, '\0');
    is.read(s.data(), len);
    if (!is) throw ParseError("checkpoint: truncated string");
    return s;
}

} // namespace

void Checkpoint::save(const std::string& path) const {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw InputError("checkpoint: cannot open " + tmp + " for writing");
        os.write(kMagic, sizeof(kMagic));
        write_pod<uint32_t>(os, 1u); // version
        write_pod<uint64_t>(os, config_hash);
        write_pod<int64_t>(os, epoch);
        write_pod<double>(os, valid_metric);
        write_string(os, config_json);
        write_pod<uint32_t>(os, static_cast<uint32_t>(rng_states.size()));
        for (const auto& [name, state] : rng_states) {
            write_string(os, name);
            write_pod<uint64_t>(os, state);
        }
        write_pod<uint32_t>(os, static_cast<uint32_t>(arrays.size()));
        for (const auto& arr : arrays) {
            write_string(os, arr.name);
            write_pod<uint32_t>(os, static_cast<uint32_t>(arr.shape.size()));
            for (int d : arr.shape) write_pod<int32_t>(os, d);
            os.write(reinterpret_cast<const char*>(arr.data.data()),
                     static_cast<std::streamsize>(arr.data.size() * sizeof(double)));
        }
        if (!os) throw InputError("checkpoint: write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw ParseError("checkpoint: bad magic in " + path);
    }
    const auto version = read_pod<uint32_t>(is);
    if (version != 1u) throw ParseError("checkpoint: unsupported version");
    Checkpoint ck;
    ck.config_hash = read_pod<uint64_t>(is);
    ck.epoch = read_pod<int64_t>(is);
    ck.valid_metric = read_pod<double>(is);
    ck.config_json = read_string(is);
    const auto n_rng = read_pod<uint32_t>(is);
    for (uint32_t i = 0; i < n_rng; ++i) {
        auto name = read_string(is);
        auto state = read_pod<uint64_t>(is);
        ck.rng_states.emplace_back(std::move(name), state);
    }
    const auto n_arrays = read_pod<uint32_t>(is);
    for (uint32_t i = 0; i < n_arrays; ++i) {
        CheckpointArray arr;
        arr.name = read_string(is);
        const auto ndim = read_pod<uint32_t>(is);
        size_t numel = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            arr.shape.push_back(read_pod<int32_t>(is));
            numel *= static_cast<size_t>(arr.shape.back());
        }
        arr.data.resize(numel);
        is.read(reinterpret_cast<char*>(arr.data.data()),
                static_cast<std::streamsize>(numel * sizeof(double)));
        if (!is) throw ParseError("checkpoint: truncated array " + arr.name);
        ck.arrays.push_back(std::move(arr));
    }
    return ck;
}

const CheckpointArray* Checkpoint::find(const std::string& name) const {
    for (const auto& arr : arrays) {
        if (arr.name == name) return &arr;
    }
    return nullptr;
}

Checkpoint checkpoint_from_params(const model::ModelParams& params, const AdamState& adam,
                                  int64_t epoch, double valid_metric,
                                  const std::vector<std::pair<std::string, uint64_t>>& rng_states) {
    Checkpoint ck;
    ck.config_json = model::config_to_json(params.cfg);
    ck.config_hash = model::config_hash(params.cfg);
    ck.epoch = epoch;
    ck.valid_metric = valid_metric;
    ck.rng_states = rng_states;
    const auto named = params.named_params();
    for (const auto& [name, p] : named) {
        ck.arrays.push_back({name, p->shape, p->data});
    }
    if (adam.m.size() == named.size()) {
        for (size_t i = 0; i < named.size(); ++i) {
            ck.arrays.push_back({"adam.m:" + named[i].first, named[i].second->shape, adam.m[i]});
            ck.arrays.push_back({"adam.v:" + named[i].first, named[i].second->shape, adam.v[i]});
        }
        ck.arrays.push_back({"adam.t", {1, 1}, {static_cast<double>(adam.t)}});
    }
    return ck;
}

model::ModelParams params_from_checkpoint(const Checkpoint& ckpt) {
    auto cfg = model::config_from_json(ckpt.config_json);
    if (model::config_hash(cfg) != ckpt.config_hash) {
        throw ConfigError("checkpoint: config hash mismatch");
    }
    auto params = model::init_params(cfg, 0);
    for (auto& [name, p] : params.named_params()) {
        const auto* arr = ckpt.find(name);
        if (!arr) throw ConfigError("checkpoint: missing array '" + name + "'");
        if (arr->shape != p->shape) {
            throw ConfigError("checkpoint: shape mismatch for '" + name + "': stored " +
                              ad::shape_str(arr->shape) + " vs model " + ad::shape_str(p->shape));
        }
        p->data = arr->data;
    }
    return params;
}

AdamState adam_from_checkpoint(const Checkpoint& ckpt,
                               const std::vector<std::pair<std::string, ad::Tensor>>& params) {
    AdamState st = AdamState::for_params(params);
    const auto* t_arr = ckpt.find("adam.t");
    if (!t_arr) return st;
    st.t = static_cast<int64_t>(t_arr->data[0]);
    for (size_t i = 0; i < params.size(); ++i) {
        const auto* m = ckpt.find("adam.m:" + params[i].first);
        const auto* v = ckpt.find("adam.v:" + params[i].first);
        if (!m || !v || m->data.size() != st.m[i].size() || v->data.size() != st.v[i].size()) {
            throw ConfigError("checkpoint: Adam moments missing or mismatched for '" +
                              params[i].first + "'");
        }
        st.m[i] = m->data;
        st.v[i] = v->data;
    }
    return st;
}

// ---------------------------------------------------------------------------
// training loop

namespace {

struct ParamSnapshot {
    std::vector<std::vector<double>> values;
    std::vector<std::vector<double>> m, v;
    int64_t t = 0;

    static ParamSnapshot take(const std::vector<std::pair<std::string, ad::Tensor>>& params,
                              const AdamState& adam) {
        ParamSnapshot s;
        for (const auto& [name, p] : params) s.values.push_back(p->data);
        s.m = adam.m;
        s.v = adam.v;
        s.t = adam.t;
        return s;
    }

    void restore(const std::vector<std::pair<std::string, ad::Tensor>>& params, AdamState& adam) const {
        for (size_t i = 0; i < params.size(); ++i) params[i].second->data = values[i];
        adam.m = m;
        adam.v = v;
        adam.t = t;
    }
};

} // namespace

TrainResult train(const model::ModelConfig& model_cfg, const OptimConfig& optim_cfg,
                  const data::Dataset& train_set, const data::Dataset& valid_set,
                  const data::Dataset& test_set, uint64_t seed) {
    optim_cfg.validate();
    if (train_set.empty() || valid_set.empty() || test_set.empty()) {
        throw InputError("train: all three datasets must be non-empty");
    }

    auto params = model::init_params(model_cfg, seed);
    auto named = params.named_params();
    auto adam = AdamState::for_params(named);
    auto shuffle_stream = rng::stream(seed, "train/shuffle");
    auto neg_stream = rng::stream(seed, "train/negatives");
    auto dropout_stream = rng::stream(seed, "train/dropout");

    TrainResult result;
    double best_metric = -1.0;
    int stale_epochs = 0;
    ParamSnapshot best_snapshot = ParamSnapshot::take(named, adam);
    std::vector<std::pair<std::string, uint64_t>> best_rng;

    std::vector<int> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    auto snapshot_rng = [&]() {
        return std::vector<std::pair<std::string, uint64_t>>{
            {"train/shuffle", shuffle_stream.state()},
            {"train/negatives", neg_stream.state()},
            {"train/dropout", dropout_stream.state()},
        };
    };
    best_rng = snapshot_rng();

    for (int epoch = 1; epoch <= optim_cfg.max_epochs && !result.aborted; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        // Fisher-Yates from the named shuffle stream
        for (size_t i = order.size(); i > 1; --i) {
            const size_t j = shuffle_stream.below(i);
            std::swap(order[i - 1], order[j]);
        }

        double loss_sum = 0.0;
        int64_t position_total = 0;
        for (size_t start = 0; start < order.size(); start += optim_cfg.batch_size) {
            const size_t end = std::min(order.size(), start + optim_cfg.batch_size);
            std::vector<int> batch(order.begin() + start, order.begin() + end);
            ad::zero_grad(params.param_list());
            ad::Tape tape;
            int positions = 0;
            auto loss = masked_next_event_loss(tape, params, train_set, batch, &neg_stream,
                                               LossMode::Auto,
                                               model_cfg.dropout > 0.0 ? &dropout_stream : nullptr,
                                               &positions);
            const double loss_value = loss->scalar_value();
            if (!std::isfinite(loss_value)) {
                result.aborted = true;
                break;
            }
            tape.backward(loss);
            try {
                adam_step(named, adam, optim_cfg);
            } catch (const NumericError&) {
                result.aborted = true;
                break;
            }
            loss_sum += loss_value * positions;
            position_total += positions;
        }
        if (result.aborted) break;

        const auto valid_rep = evaluate(params, valid_set);
        const double metric = monitored_value(valid_rep, optim_cfg.monitor);
        const auto t1 = std::chrono::steady_clock::now();

        EpochRow row;
        row.epoch = epoch;
        row.train_loss = position_total > 0 ? loss_sum / position_total : 0.0;
        row.valid_metric = metric;
        row.seconds = std::chrono::duration<double>(t1 - t0).count();
        result.log.push_back(row);
        result.epochs_run = epoch;

        if (metric > best_metric) {
            best_metric = metric;
            result.best_epoch = epoch;
            best_snapshot = ParamSnapshot::take(named, adam);
            best_rng = snapshot_rng();
            stale_epochs = 0;
        } else {
            ++stale_epochs;
            if (stale_epochs >= optim_cfg.patience) break;
        }
    }

    best_snapshot.restore(named, adam);
    result.best = checkpoint_from_params(params, adam, result.best_epoch,
                                         best_metric < 0.0 ? 0.0 : best_metric, best_rng);
    result.test = evaluate(params, test_set);
    return result;
}

} // namespace tempo::train
