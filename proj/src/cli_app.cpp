#include "tempo/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tempo/data_synth.hpp"
#include "tempo/io_util.hpp"
#include "tempo/kernel_lab.hpp"
#include "tempo/sequence_model.hpp"
#include "tempo/time_embedding.hpp"
#include "tempo/training.hpp"

namespace fs = std::filesystem;

namespace tempo::cli {

namespace {

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t comma = text.find(',', pos);
        if (comma == std::string::npos) comma = text.size();
        out.push_back(std::stoi(text.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    if (out.empty()) throw UsageError("expected a comma-separated integer list, got '" + text + "'");
    return out;
}

/// "a:b:step" (inclusive) or a comma-separated list of values.
std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> out;
    if (text.find(':') != std::string::npos) {
        const auto c1 = text.find(':');
        const auto c2 = text.find(':', c1 + 1);
        if (c2 == std::string::npos) throw UsageError("grid wants start:stop:step, got '" + text + "'");
        const double start = std::stod(text.substr(0, c1));
        const double stop = std::stod(text.substr(c1 + 1, c2 - c1 - 1));
        const double step = std::stod(text.substr(c2 + 1));
        if (!(step > 0.0) || stop < start) throw UsageError("bad grid range '" + text + "'");
        for (double v = start; v <= stop + 1e-12 * std::fabs(stop); v += step) out.push_back(v);
    } else {
        size_t pos = 0;
        while (pos < text.size()) {
            size_t comma = text.find(',', pos);
            if (comma == std::string::npos) comma = text.size();
            out.push_back(std::stod(text.substr(pos, comma - pos)));
            pos = comma + 1;
        }
    }
    if (out.empty()) throw UsageError("empty grid '" + text + "'");
    return out;
}

struct RunContext {
    std::string subcommand;
    std::vector<std::string> argv;
    uint64_t seed = 0;
    fs::path out_dir;
    std::vector<std::string> outputs;       // files included in the manifest hash map
    std::vector<std::string> unhashed;      // wall-time style outputs, listed but not hashed
    nlohmann::json meta;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

    fs::path path(const std::string& name) const { return out_dir / name; }

    void emit(const std::string& name, const std::string& content, bool hashed = true) {
        io::write_text_atomic((out_dir / name).string(), content);
        (hashed ? outputs : unhashed).push_back(name);
    }

    void finish() {
        nlohmann::json manifest;
        manifest["subcommand"] = subcommand;
        manifest["argv"] = argv;
        manifest["seed"] = seed;
        nlohmann::json hashes = nlohmann::json::object();
        for (const auto& name : outputs) {
            char buf[20];
            std::snprintf(buf, sizeof(buf), "%016llx",
                          static_cast<unsigned long long>(io::fnv1a_file((out_dir / name).string())));
            hashes[name] = buf;
        }
        manifest["outputs"] = hashes;
        manifest["unhashed_outputs"] = unhashed;
        manifest["wall_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        manifest["meta"] = meta;
        io::write_text_atomic((out_dir / "manifest.json").string(), manifest.dump(2) + "\n");
    }
};

// ---------------------------------------------------------------------------

struct GenerateOpts {
    std::string task = "gap-rule";
    int count = 8;
};

void run_generate(RunContext& ctx, const GenerateOpts& o) {
    if (o.task == "gap-rule") {
        data::GapRuleTask task;
        const auto split = data::generate(task, ctx.seed);
        data::save_jsonl(ctx.path("train.jsonl").string(), split.train);
        data::save_jsonl(ctx.path("valid.jsonl").string(), split.valid);
        data::save_jsonl(ctx.path("test.jsonl").string(), split.test);
        ctx.outputs.insert(ctx.outputs.end(), {"train.jsonl", "valid.jsonl", "test.jsonl"});
        const auto rates = data::bayes_rates(task);
        nlohmann::json t;
        t["task"] = "gap-rule";
        t["vocab"] = task.vocab;
        t["p_short"] = task.p_short;
        t["mean_short"] = task.mean_short;
        t["mean_long"] = task.mean_long;
        t["threshold"] = task.threshold;
        t["seq_len"] = task.seq_len;
        t["counts"] = {task.n_train, task.n_valid, task.n_test};
        t["bayes_with_gaps"] = rates.with_gaps;
        t["bayes_without_gaps"] = rates.without_gaps;
        ctx.emit("task.json", t.dump(2) + "\n");
    } else if (o.task == "periodic") {
        data::PeriodicAttentionTask task;
        const auto ds = data::generate_periodic(task, o.count, ctx.seed);
        data::save_jsonl(ctx.path("data.jsonl").string(), ds);
        ctx.outputs.push_back("data.jsonl");
        nlohmann::json t;
        t["task"] = "periodic";
        t["period"] = task.period;
        t["vocab"] = task.vocab;
        t["seq_len"] = task.seq_len;
        t["count"] = o.count;
        ctx.emit("task.json", t.dump(2) + "\n");
    } else {
        throw UsageError("unknown task '" + o.task + "'");
    }
}

// ---------------------------------------------------------------------------

struct KernelApproxOpts {
    std::string kernel = "gaussian";
    double sigma = 1.0;
    double t_max = 4.0;
    double grid_step = 0.05;
    double eps = 0.1;
    int seeds = 20;
    std::string d_list = "64,256,1024,4096";
};

void run_kernel_approx(RunContext& ctx, const KernelApproxOpts& o) {
    if (o.kernel != "gaussian") throw UsageError("unknown kernel '" + o.kernel + "'");
    const auto spec = kern::gaussian_kernel(o.sigma, o.t_max);
    const auto d_list = parse_int_list(o.d_list);
    const auto rows = kern::mc_approximation_study(spec, d_list, o.seeds, o.grid_step, ctx.seed);

    io::CsvBuilder csv({"d", "mean_sup_error", "max_sup_error", "bound_raw", "bound_clamped"});
    for (const auto& r : rows) {
        const auto b = kern::claim1_bound(spec.sigma_p2, spec.t_max, o.eps, r.d);
        csv.append_row({std::to_string(r.d), io::fmt_double(r.mean_sup_error),
                        io::fmt_double(r.max_sup_error), io::fmt_double(b.raw),
                        io::fmt_double(b.clamped)});
    }
    ctx.emit("kernel_approx.csv", csv.text());
    ctx.meta["kernel"] = spec.name;
    ctx.meta["sigma_p"] = std::sqrt(spec.sigma_p2);
    ctx.meta["sigma_p2"] = spec.sigma_p2;
    ctx.meta["t_max"] = spec.t_max;
    ctx.meta["eps"] = o.eps;
    ctx.meta["grid_step"] = o.grid_step;
    ctx.meta["seeds"] = o.seeds;
}

// ---------------------------------------------------------------------------

struct MercerCheckOpts {
    std::string kernel = "triangle";
    int jmax = 31;
    int quad_points = 512;
    std::string d_list = "1,3,7,15,31";
};

void run_mercer_check(RunContext& ctx, const MercerCheckOpts& o) {
    kern::PeriodicKernelSpec spec;
    if (o.kernel == "triangle") {
        spec = kern::triangle_kernel(std::max(64, o.jmax));
    } else if (o.kernel == "cosine") {
        spec = kern::cosine_kernel(std::max(64, o.jmax));
    } else {
        throw UsageError("unknown kernel '" + o.kernel + "'");
    }

    io::CsvBuilder residuals({"j", "coeff", "residual_cos", "residual_sin"});
    for (int j = 1; j <= o.jmax; ++j) {
        const auto r = kern::eigenfunction_residual(spec, j, o.quad_points);
        residuals.append_row({std::to_string(j), io::fmt_double(r.coeff),
                              io::fmt_double(r.residual_cos), io::fmt_double(r.residual_sin)});
    }
    ctx.emit("eigen_residuals.csv", residuals.text());

    const auto decay = kern::truncation_decay(spec, parse_int_list(o.d_list));
    io::CsvBuilder decay_csv({"d", "sup_error"});
    for (const auto& [d, err] : decay) {
        decay_csv.append_row({std::to_string(d), io::fmt_double(err)});
    }
    ctx.emit("truncation_decay.csv", decay_csv.text());
    ctx.meta["kernel"] = spec.name;
    ctx.meta["lipschitz"] = spec.lipschitz;
    ctx.meta["quad_points"] = o.quad_points;
}

// ---------------------------------------------------------------------------

struct TrainOpts {
    std::string task = "gap-rule";
    std::string data_dir;
    int vocab = 20;
    std::string embedder = "mercer";
    int k = 5;
    int jmax = 2;
    bool no_intercept = false;
    bool tied = false;
    bool train_periods = false;
    int d = 16;
    int event_dim = 32;
    int blocks = 1;
    int heads = 1;
    std::string interaction = "mlp";
    int mlp_hidden = 64;
    int max_seq_len = 8;
    int n_neg = 0;
    bool no_residual = false;
    double dropout = 0.0;
    double tau_min = 0.0; // 0 => derive from the training data
    double tau_max = 0.0;
    int epochs = 30;
    int batch = 32;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double adam_eps = 1e-8;
    int patience = 10;
    std::string monitor = "accuracy";

    // set by CLI11 when the user supplied the flag explicitly
    bool k_given = false, jmax_given = false, d_given = false;
    bool mercer_flag_given = false;
};

model::EmbedderKind embedder_from_flag(const std::string& name) {
    if (name == "mercer") return model::EmbedderKind::Mercer;
    if (name == "bochner-normal") return model::EmbedderKind::BochnerNormal;
    if (name == "bochner-invcdf") return model::EmbedderKind::BochnerInvCdf;
    if (name == "bochner-nonparam") return model::EmbedderKind::BochnerNonParam;
    if (name == "posenc") return model::EmbedderKind::PosEnc;
    throw UsageError("unknown embedder '" + name + "'");
}

void derive_tau_range(const data::Dataset& train_set, double& tau_min, double& tau_max) {
    const auto [lo, hi] = model::derive_period_range(train_set);
    if (tau_min <= 0.0) tau_min = lo;
    if (tau_max <= 0.0) tau_max = std::max(hi, tau_min * 10.0);
}

struct LoadedData {
    data::Dataset train, valid, test;
    int vocab = 0;
};

LoadedData load_train_data(const TrainOpts& o, uint64_t seed) {
    LoadedData ld;
    if (!o.data_dir.empty()) {
        ld.train = data::load_jsonl((fs::path(o.data_dir) / "train.jsonl").string(), o.vocab);
        ld.valid = data::load_jsonl((fs::path(o.data_dir) / "valid.jsonl").string(), o.vocab);
        ld.test = data::load_jsonl((fs::path(o.data_dir) / "test.jsonl").string(), o.vocab);
        ld.vocab = o.vocab;
    } else if (o.task == "gap-rule") {
        data::GapRuleTask task;
        auto split = data::generate(task, seed);
        ld.train = std::move(split.train);
        ld.valid = std::move(split.valid);
        ld.test = std::move(split.test);
        ld.vocab = task.vocab;
    } else {
        throw UsageError("unknown task '" + o.task + "' (use --data-dir for files)");
    }
    return ld;
}

model::ModelConfig model_config_from_opts(const TrainOpts& o, int vocab,
                                          const data::Dataset& train_set) {
    const auto kind = embedder_from_flag(o.embedder);
    if (kind != model::EmbedderKind::Mercer && (o.k_given || o.jmax_given || o.mercer_flag_given)) {
        throw UsageError("--k/--jmax/--no-intercept/--tied/--train-periods apply to the mercer embedder only");
    }
    if (kind == model::EmbedderKind::Mercer && o.d_given) {
        throw UsageError("--d applies to the bochner/posenc embedders only");
    }

    model::ModelConfig cfg;
    cfg.vocab_size = vocab;
    cfg.event_dim = o.event_dim;
    cfg.embedder = kind;
    cfg.bochner_d = o.d;
    cfg.mercer_k = o.k;
    cfg.mercer_jmax = o.jmax;
    cfg.mercer_intercept = !o.no_intercept;
    cfg.mercer_tied = o.tied;
    cfg.train_periods = o.train_periods;
    cfg.num_blocks = o.blocks;
    cfg.num_heads = o.heads;
    if (o.interaction == "linear") {
        cfg.interaction = model::Interaction::Linear;
    } else if (o.interaction == "mlp") {
        cfg.interaction = model::Interaction::MlpRelu;
    } else {
        throw UsageError("unknown interaction '" + o.interaction + "'");
    }
    cfg.mlp_hidden = o.mlp_hidden;
    cfg.max_seq_len = o.max_seq_len;
    cfg.n_neg = o.n_neg;
    cfg.residual = !o.no_residual;
    cfg.dropout = o.dropout;
    cfg.tau_min = o.tau_min;
    cfg.tau_max = o.tau_max;
    derive_tau_range(train_set, cfg.tau_min, cfg.tau_max);
    cfg.validate();
    return cfg;
}

train::OptimConfig optim_config_from_opts(const TrainOpts& o) {
    train::OptimConfig oc;
    oc.learning_rate = o.lr;
    oc.beta1 = o.beta1;
    oc.beta2 = o.beta2;
    oc.epsilon = o.adam_eps;
    oc.batch_size = o.batch;
    oc.max_epochs = o.epochs;
    oc.patience = o.patience;
    if (o.monitor == "accuracy") {
        oc.monitor = train::Monitor::Accuracy;
    } else if (o.monitor == "ndcg10") {
        oc.monitor = train::Monitor::NdcgAt10;
    } else {
        throw UsageError("unknown monitor '" + o.monitor + "'");
    }
    oc.validate();
    return oc;
}

nlohmann::json metrics_to_json(const train::MetricReport& m) {
    nlohmann::json j;
    j["accuracy"] = m.accuracy;
    j["hit5"] = m.hit5;
    j["hit10"] = m.hit10;
    j["ndcg5"] = m.ndcg5;
    j["ndcg10"] = m.ndcg10;
    j["loss"] = m.loss;
    return j;
}

int run_train(RunContext& ctx, const TrainOpts& o) {
    const auto ld = load_train_data(o, ctx.seed);
    const auto cfg = model_config_from_opts(o, ld.vocab, ld.train);
    const auto oc = optim_config_from_opts(o);

    const auto result = train::train(cfg, oc, ld.train, ld.valid, ld.test, ctx.seed);

    result.best.save(ctx.path("checkpoint.bin").string());
    ctx.outputs.push_back("checkpoint.bin");

    io::CsvBuilder epochs({"epoch", "train_loss", "valid_metric"});
    io::CsvBuilder timing({"epoch", "seconds"});
    for (const auto& row : result.log) {
        epochs.append_row({std::to_string(row.epoch), io::fmt_double(row.train_loss),
                           io::fmt_double(row.valid_metric)});
        timing.append_row({std::to_string(row.epoch), io::fmt_double(row.seconds)});
    }
    ctx.emit("epochs.csv", epochs.text());
    ctx.emit("timing.csv", timing.text(), /*hashed=*/false);

    nlohmann::json metrics;
    metrics["test"] = metrics_to_json(result.test);
    metrics["best_epoch"] = result.best_epoch;
    metrics["epochs_run"] = result.epochs_run;
    metrics["aborted"] = result.aborted;
    metrics["best_valid_metric"] = result.best.valid_metric;
    metrics["model_config"] = nlohmann::json::parse(model::config_to_json(cfg));
    ctx.emit("metrics.json", metrics.dump(2) + "\n");

    std::cout << "test accuracy " << io::fmt_double(result.test.accuracy) << ", hit@10 "
              << io::fmt_double(result.test.hit10) << ", ndcg@10 "
              << io::fmt_double(result.test.ndcg10) << " (best epoch " << result.best_epoch << ")\n";
    ctx.meta["embedder"] = o.embedder;
    ctx.meta["test_accuracy"] = result.test.accuracy;
    return result.aborted ? 4 : 0;
}

// ---------------------------------------------------------------------------

struct SweepOpts {
    TrainOpts base;
    std::string param = "d";
    std::string values = "8,32,64";
    int repeat = 1;
};

void run_sweep(RunContext& ctx, const SweepOpts& o) {
    if (o.param != "d" && o.param != "k") throw UsageError("--param must be d or k");
    if (o.repeat < 1) throw UsageError("--repeat must be >= 1");
    const auto values = parse_int_list(o.values);

    TrainOpts base = o.base;
    if (o.param == "k" && base.embedder != "mercer") base.embedder = "mercer";
    if (o.param == "d" && base.embedder == "mercer") base.embedder = "bochner-nonparam";

    const auto ld = load_train_data(base, ctx.seed);
    const auto oc = optim_config_from_opts(base);

    io::CsvBuilder runs({"param", "value", "repeat", "seed", "accuracy", "hit5", "hit10", "ndcg5",
                         "ndcg10", "loss", "epochs_run"});
    io::CsvBuilder agg({"param", "value", "mean_accuracy", "std_accuracy", "mean_ndcg10",
                        "std_ndcg10", "runs"});
    for (int value : values) {
        TrainOpts to = base;
        if (o.param == "d") {
            to.d = value;
        } else {
            to.k = value;
        }
        std::vector<double> accs, ndcgs;
        for (int rep = 0; rep < o.repeat; ++rep) {
            const uint64_t run_seed =
                rng::stream(ctx.seed, "sweep/" + o.param + "=" + std::to_string(value) + "/rep" +
                                          std::to_string(rep))
                    .next_u64();
            const auto cfg = model_config_from_opts(to, ld.vocab, ld.train);
            const auto result = train::train(cfg, oc, ld.train, ld.valid, ld.test, run_seed);
            runs.append_row({o.param, std::to_string(value), std::to_string(rep),
                             std::to_string(run_seed), io::fmt_double(result.test.accuracy),
                             io::fmt_double(result.test.hit5), io::fmt_double(result.test.hit10),
                             io::fmt_double(result.test.ndcg5), io::fmt_double(result.test.ndcg10),
                             io::fmt_double(result.test.loss), std::to_string(result.epochs_run)});
            accs.push_back(result.test.accuracy);
            ndcgs.push_back(result.test.ndcg10);
            std::cout << o.param << "=" << value << " rep " << rep << ": accuracy "
                      << io::fmt_double(result.test.accuracy) << "\n";
        }
        auto mean_of = [](const std::vector<double>& xs) {
            double acc = 0.0;
            for (double x : xs) acc += x;
            return acc / xs.size();
        };
        auto std_of = [&](const std::vector<double>& xs, double mean) {
            if (xs.size() < 2) return 0.0;
            double acc = 0.0;
            for (double x : xs) acc += (x - mean) * (x - mean);
            return std::sqrt(acc / (xs.size() - 1));
        };
        const double ma = mean_of(accs), mn = mean_of(ndcgs);
        agg.append_row({o.param, std::to_string(value), io::fmt_double(ma),
                        io::fmt_double(std_of(accs, ma)), io::fmt_double(mn),
                        io::fmt_double(std_of(ndcgs, mn)), std::to_string(o.repeat)});
    }
    ctx.emit("sweep_runs.csv", runs.text());
    ctx.emit("sweep_agg.csv", agg.text());
    ctx.meta["param"] = o.param;
    ctx.meta["values"] = values;
    ctx.meta["repeat"] = o.repeat;
}

// ---------------------------------------------------------------------------

struct ExportOpts {
    std::string what = "phi";
    std::string checkpoint;
    std::string grid = "0:20:0.25";
    std::string times;
    std::string task = "periodic";
    std::string data_file;
    int seq_index = 0;
};

void run_export(RunContext& ctx, const ExportOpts& o) {
    if (o.checkpoint.empty()) throw UsageError("--checkpoint is required");
    const auto ckpt = train::Checkpoint::load(o.checkpoint);
    const auto params = train::params_from_checkpoint(ckpt);

    if (o.what == "phi" || o.what == "gram") {
        if (!params.embedder) {
            throw InputError("export: the checkpointed model uses positional encoding, no time embedder");
        }
        const auto grid = parse_grid(o.grid);
        if (o.what == "phi") {
            const auto rows = emb::phi_matrix(*params.embedder, grid);
            std::vector<std::string> header{"t"};
            for (size_t c = 0; c < rows[0].size(); ++c) header.push_back("phi_" + std::to_string(c));
            io::CsvBuilder csv(header);
            for (size_t i = 0; i < grid.size(); ++i) {
                std::vector<std::string> cells{io::fmt_double(grid[i])};
                for (double v : rows[i]) cells.push_back(io::fmt_double(v));
                csv.append_row(cells);
            }
            ctx.emit("phi.csv", csv.text());
        } else {
            const auto gram = emb::gram_matrix(*params.embedder, grid);
            std::vector<std::string> header{"t"};
            for (size_t c = 0; c < grid.size(); ++c) header.push_back("k_" + std::to_string(c));
            io::CsvBuilder csv(header);
            for (size_t i = 0; i < grid.size(); ++i) {
                std::vector<std::string> cells{io::fmt_double(grid[i])};
                for (double v : gram[i]) cells.push_back(io::fmt_double(v));
                csv.append_row(cells);
            }
            ctx.emit("gram.csv", csv.text());
        }
    } else if (o.what == "attention") {
        data::Dataset ds;
        if (!o.data_file.empty()) {
            ds = data::load_jsonl(o.data_file, params.cfg.vocab_size);
        } else if (o.task == "periodic") {
            data::PeriodicAttentionTask task;
            task.vocab = std::min(task.vocab, params.cfg.vocab_size);
            ds = data::generate_periodic(task, o.seq_index + 1, ctx.seed);
        } else if (o.task == "gap-rule") {
            data::GapRuleTask task;
            task.n_train = o.seq_index + 1;
            task.n_valid = 0;
            task.n_test = 0;
            ds = data::generate(task, ctx.seed).train;
        } else {
            throw UsageError("unknown task '" + o.task + "'");
        }
        if (o.seq_index < 0 || o.seq_index >= static_cast<int>(ds.size())) {
            throw InputError("export: sequence index out of range");
        }
        const auto& seq = ds[o.seq_index];
        std::vector<double> times;
        if (o.times.empty()) {
            const double t_last = seq.times.back();
            for (int i = 0; i <= 40; ++i) times.push_back(t_last + 0.5 * i);
        } else {
            times = parse_grid(o.times);
        }
        const auto rows = model::export_attention(params, seq, times);
        std::vector<std::string> header{"target_time"};
        for (size_t c = 0; c < rows[0].size(); ++c) header.push_back("w_" + std::to_string(c));
        io::CsvBuilder csv(header);
        for (size_t i = 0; i < times.size(); ++i) {
            std::vector<std::string> cells{io::fmt_double(times[i])};
            for (double v : rows[i]) cells.push_back(io::fmt_double(v));
            csv.append_row(cells);
        }
        ctx.emit("attention.csv", csv.text());
    } else {
        throw UsageError("--what must be phi, gram or attention");
    }
    ctx.meta["what"] = o.what;
    ctx.meta["checkpoint"] = o.checkpoint;
}

// ---------------------------------------------------------------------------

void add_train_options(CLI::App* sub, TrainOpts& o) {
    sub->add_option("--task", o.task, "synthetic task name (gap-rule)");
    sub->add_option("--data-dir", o.data_dir, "directory with train/valid/test.jsonl");
    sub->add_option("--vocab", o.vocab, "vocabulary size for --data-dir input");
    sub->add_option("--embedder", o.embedder,
                    "mercer|bochner-normal|bochner-invcdf|bochner-nonparam|posenc");
    auto* kopt = sub->add_option("--k", o.k, "mercer: number of base frequencies");
    auto* jopt = sub->add_option("--jmax", o.jmax, "mercer: truncation degree per frequency");
    auto* iopt = sub->add_flag("--no-intercept", o.no_intercept, "mercer: drop the constant component");
    auto* topt = sub->add_flag("--tied", o.tied, "mercer: tie cos/sin coefficient pairs");
    auto* popt = sub->add_flag("--train-periods", o.train_periods, "mercer: train the base periods");
    auto* dopt = sub->add_option("--d", o.d, "bochner sample count / posenc half-width");
    sub->add_option("--event-dim", o.event_dim, "event embedding width (also block width)");
    sub->add_option("--blocks", o.blocks, "number of attention blocks");
    sub->add_option("--heads", o.heads, "attention heads per block");
    sub->add_option("--interaction", o.interaction, "linear|mlp");
    sub->add_option("--mlp-hidden", o.mlp_hidden, "interaction MLP hidden width");
    sub->add_option("--max-seq-len", o.max_seq_len, "context window length");
    sub->add_option("--n-neg", o.n_neg, "negative samples for sampled cross-entropy");
    sub->add_flag("--no-residual", o.no_residual, "disable residual connections");
    sub->add_option("--dropout", o.dropout, "dropout rate on the interaction output");
    sub->add_option("--tau-min", o.tau_min, "shortest period (0 derives from data)");
    sub->add_option("--tau-max", o.tau_max, "longest period (0 derives from data)");
    sub->add_option("--epochs", o.epochs, "maximum training epochs");
    sub->add_option("--batch", o.batch, "sequences per batch");
    sub->add_option("--lr", o.lr, "Adam learning rate");
    sub->add_option("--beta1", o.beta1, "Adam beta1");
    sub->add_option("--beta2", o.beta2, "Adam beta2");
    sub->add_option("--adam-eps", o.adam_eps, "Adam epsilon");
    sub->add_option("--patience", o.patience, "early stopping patience (epochs)");
    sub->add_option("--monitor", o.monitor, "accuracy|ndcg10");

    sub->parse_complete_callback([&o, kopt, jopt, dopt, iopt, topt, popt]() {
        o.k_given = kopt->count() > 0;
        o.jmax_given = jopt->count() > 0;
        o.d_given = dopt->count() > 0;
        o.mercer_flag_given = iopt->count() > 0 || topt->count() > 0 || popt->count() > 0;
    });
}

} // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"functional time embeddings and a next-event attention model"};
    app.require_subcommand(1);

    uint64_t seed = 42;
    std::string out_dir_flag;

    GenerateOpts gen_opts;
    KernelApproxOpts ka_opts;
    MercerCheckOpts mc_opts;
    TrainOpts train_opts;
    SweepOpts sweep_opts;
    ExportOpts export_opts;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", seed, "root seed; every consumer pulls a named stream from it");
        sub->add_option("--out-dir", out_dir_flag, "output directory (default $TEMPO_OUT_DIR or ./tempo_out)");
    };

    auto* gen = app.add_subcommand("generate", "write synthetic datasets as jsonl");
    add_common(gen);
    gen->add_option("--task", gen_opts.task, "gap-rule|periodic");
    gen->add_option("--count", gen_opts.count, "sequences for the periodic task");

    auto* ka = app.add_subcommand("kernel-approx", "Monte Carlo kernel approximation study");
    add_common(ka);
    ka->add_option("--kernel", ka_opts.kernel, "analytic kernel name (gaussian)");
    ka->add_option("--sigma", ka_opts.sigma, "gaussian kernel width");
    ka->add_option("--t-max", ka_opts.t_max, "grid half-width");
    ka->add_option("--grid-step", ka_opts.grid_step, "delta grid step");
    ka->add_option("--eps", ka_opts.eps, "epsilon for the tail bound column");
    ka->add_option("--seeds", ka_opts.seeds, "number of Monte Carlo trials");
    ka->add_option("--d-list", ka_opts.d_list, "comma-separated sample counts");

    auto* mc = app.add_subcommand("mercer-check", "eigenfunction residuals and truncation decay");
    add_common(mc);
    mc->add_option("--kernel", mc_opts.kernel, "triangle|cosine");
    mc->add_option("--jmax", mc_opts.jmax, "largest basis index to check");
    mc->add_option("--quad-points", mc_opts.quad_points, "Simpson subintervals (>= 512)");
    mc->add_option("--d-list", mc_opts.d_list, "partial-sum degrees for the decay table");

    auto* tr = app.add_subcommand("train", "train the next-event model");
    add_common(tr);
    add_train_options(tr, train_opts);

    auto* sw = app.add_subcommand("sweep", "repeat training over embedding sizes");
    add_common(sw);
    sw->add_option("--param", sweep_opts.param, "d|k");
    sw->add_option("--values", sweep_opts.values, "comma-separated values");
    sw->add_option("--repeat", sweep_opts.repeat, "runs per value");
    add_train_options(sw, sweep_opts.base);

    auto* ex = app.add_subcommand("export", "write phi/gram/attention matrices from a checkpoint");
    add_common(ex);
    ex->add_option("--what", export_opts.what, "phi|gram|attention");
    ex->add_option("--checkpoint", export_opts.checkpoint, "checkpoint file");
    ex->add_option("--grid", export_opts.grid, "time grid: start:stop:step or comma list");
    ex->add_option("--times", export_opts.times, "attention target times");
    ex->add_option("--task", export_opts.task, "sequence source task (periodic|gap-rule)");
    ex->add_option("--data", export_opts.data_file, "jsonl file as the sequence source");
    ex->add_option("--seq-index", export_opts.seq_index, "which sequence to export");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    RunContext ctx;
    ctx.seed = seed;
    for (int i = 0; i < argc; ++i) ctx.argv.emplace_back(argv[i]);

    std::string out_dir = out_dir_flag;
    if (out_dir.empty()) {
        if (const char* env = std::getenv("TEMPO_OUT_DIR")) out_dir = env;
    }
    if (out_dir.empty()) out_dir = "tempo_out";
    ctx.out_dir = out_dir;

    int code = 0;
    try {
        std::filesystem::create_directories(ctx.out_dir);
        if (app.got_subcommand(gen)) {
            ctx.subcommand = "generate";
            run_generate(ctx, gen_opts);
        } else if (app.got_subcommand(ka)) {
            ctx.subcommand = "kernel-approx";
            run_kernel_approx(ctx, ka_opts);
        } else if (app.got_subcommand(mc)) {
            ctx.subcommand = "mercer-check";
            run_mercer_check(ctx, mc_opts);
        } else if (app.got_subcommand(tr)) {
            ctx.subcommand = "train";
            code = run_train(ctx, train_opts);
        } else if (app.got_subcommand(sw)) {
            ctx.subcommand = "sweep";
            run_sweep(ctx, sweep_opts);
        } else if (app.got_subcommand(ex)) {
            ctx.subcommand = "export";
            run_export(ctx, export_opts);
        }
        ctx.finish();
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return 4;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return code;
}

} // namespace tempo::cli
