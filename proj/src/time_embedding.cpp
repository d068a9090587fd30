#include "tempo/time_embedding.hpp"

#include <cmath>
#include <string>

namespace tempo::emb {

namespace {

constexpr double kPi = 3.14159265358979323846;

void require_finite(double t) {
    if (!std::isfinite(t)) throw InputError("time value is not finite");
}

void require_finite_times(const ad::Tensor& times) {
    if (times->shape.size() != 2 || times->cols() != 1) {
        throw DimensionError("embed_graph: times must be a column [q,1], got " + ad::shape_str(times));
    }
    for (double v : times->data) {
        if (!std::isfinite(v)) throw InputError("time value is not finite");
    }
}

double glorot_limit(int fan_in, int fan_out) { return std::sqrt(6.0 / (fan_in + fan_out)); }

ad::Tensor glorot_uniform(int rows, int cols, rng::Stream& s, const std::string& name) {
    const double a = glorot_limit(rows, cols);
    std::vector<double> d(static_cast<size_t>(rows) * cols);
    for (auto& v : d) v = s.uniform(-a, a);
    return ad::tensor({rows, cols}, std::move(d), true, name);
}

} // namespace

double kernel_estimate(const TimeEmbedder& e, double t1, double t2) {
    const auto a = e.embed(t1);
    const auto b = e.embed(t2);
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

GeometricInit init_frequencies_geometric(double tau_min, double tau_max, int n) {
    if (!(tau_min > 0.0) || !(tau_min < tau_max)) {
        throw ConfigError("init_frequencies_geometric: need 0 < tau_min < tau_max, got " +
                          std::to_string(tau_min) + ", " + std::to_string(tau_max));
    }
    if (n < 1) throw ConfigError("init_frequencies_geometric: need n >= 1");
    GeometricInit out;
    out.periods.resize(n);
    const double span = tau_max - tau_min;
    if (span <= 1.0) {
        out.degenerate = true;
        const double ratio = tau_max / tau_min;
        for (int i = 1; i <= n; ++i) {
            out.periods[i - 1] = tau_min * std::pow(ratio, static_cast<double>(i) / n);
        }
    } else {
        for (int i = 1; i <= n; ++i) {
            out.periods[i - 1] = tau_min + std::pow(span, static_cast<double>(i) / n);
        }
    }
    return out;
}

std::vector<std::vector<double>> phi_matrix(const TimeEmbedder& e, const std::vector<double>& grid) {
    if (grid.empty()) throw InputError("phi_matrix: empty grid");
    std::vector<std::vector<double>> rows;
    rows.reserve(grid.size());
    for (double t : grid) rows.push_back(e.embed(t));
    return rows;
}

std::vector<std::vector<double>> gram_matrix(const TimeEmbedder& e, const std::vector<double>& grid) {
    if (grid.empty()) throw InputError("gram_matrix: empty grid");
    const auto phi = phi_matrix(e, grid);
    const size_t n = grid.size();
    std::vector<std::vector<double>> gram(n, std::vector<double>(n, 0.0));
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j <= i; ++j) {
            double acc = 0.0;
            for (size_t p = 0; p < phi[i].size(); ++p) acc += phi[i][p] * phi[j][p];
            gram[i][j] = acc;
            gram[j][i] = acc;
        }
    }
    return gram;
}

// ---------------------------------------------------------------------------
// BochnerNormal: omega_i = mu + softplus(sigma_raw) * eps_i

BochnerNormal::BochnerNormal(int d, rng::Stream noise) : d_(d) {
    if (d < 1) throw ConfigError("BochnerNormal: d must be >= 1");
    mu_ = ad::tensor({1, 1}, {0.0}, true, "embed.mu");
    // softplus(raw) == 1 at init, i.e. a standard normal spectral start
    sigma_raw_ = ad::tensor({1, 1}, {std::log(std::exp(1.0) - 1.0)}, true, "embed.sigma_raw");
    std::vector<double> eps(d);
    for (auto& v : eps) v = noise.normal();
    eps_row_ = ad::tensor({1, d}, std::move(eps), false, "embed.eps");
}

double BochnerNormal::sigma() const { return std::log(std::exp(sigma_raw_->data[0]) + 1.0); }

std::vector<double> BochnerNormal::embed(double t) const {
    require_finite(t);
    const double mu = mu_->data[0];
    const double sg = sigma();
    const double scale = std::sqrt(1.0 / d_);
    std::vector<double> out(2 * d_);
    for (int i = 0; i < d_; ++i) {
        const double w = mu + sg * eps_row_->data[i];
        const double phase = t * w;
        out[2 * i] = scale * std::cos(phase);
        out[2 * i + 1] = scale * std::sin(phase);
    }
    return out;
}

ad::Tensor BochnerNormal::embed_graph(ad::Tape& tape, const ad::Tensor& times) const {
    require_finite_times(times);
    auto one = ad::scalar(1.0);
    auto sp = tape.log(tape.add(tape.exp(sigma_raw_), one)); // softplus
    auto ones_row = ad::full({1, d_}, 1.0);
    auto omega = tape.add(tape.matmul(mu_, ones_row), tape.matmul(sp, eps_row_));
    auto phases = tape.matmul(times, omega);
    auto feats = tape.interleave_cols(tape.cos(phases), tape.sin(phases));
    return tape.scale(feats, std::sqrt(1.0 / d_));
}

// ---------------------------------------------------------------------------
// BochnerInvCdf: omega_i = g(u_i) with a small scalar-to-scalar ReLU network
// applied per frozen uniform sample.

BochnerInvCdf::BochnerInvCdf(int d, rng::Stream init) : d_(d) {
    if (d < 1) throw ConfigError("BochnerInvCdf: d must be >= 1");
    w1_ = glorot_uniform(1, kHidden, init, "embed.invcdf.w1");
    b1_ = ad::zeros({1, kHidden}, true);
    b1_->name = "embed.invcdf.b1";
    w2_ = glorot_uniform(kHidden, kHidden, init, "embed.invcdf.w2");
    b2_ = ad::zeros({1, kHidden}, true);
    b2_->name = "embed.invcdf.b2";
    w3_ = glorot_uniform(kHidden, 1, init, "embed.invcdf.w3");
    b3_ = ad::zeros({1, 1}, true);
    b3_->name = "embed.invcdf.b3";
    std::vector<double> u(d);
    for (auto& v : u) v = init.uniform01();
    u_col_ = ad::tensor({d, 1}, std::move(u), false, "embed.invcdf.u");
}

std::vector<ad::Tensor> BochnerInvCdf::trainables() const { return {w1_, b1_, w2_, b2_, w3_, b3_}; }

std::vector<double> BochnerInvCdf::frequencies() const {
    std::vector<double> omega(d_);
    std::vector<double> h1(kHidden), h2(kHidden);
    for (int i = 0; i < d_; ++i) {
        const double u = u_col_->data[i];
        for (int j = 0; j < kHidden; ++j) {
            const double v = u * w1_->data[j] + b1_->data[j];
            h1[j] = v > 0.0 ? v : 0.0;
        }
        for (int j = 0; j < kHidden; ++j) {
            double acc = 0.0;
            for (int p = 0; p < kHidden; ++p) acc += h1[p] * w2_->data[p * kHidden + j];
            acc += b2_->data[j];
            h2[j] = acc > 0.0 ? acc : 0.0;
        }
        double acc = 0.0;
        for (int p = 0; p < kHidden; ++p) acc += h2[p] * w3_->data[p];
        omega[i] = acc + b3_->data[0];
    }
    return omega;
}

std::vector<double> BochnerInvCdf::embed(double t) const {
    require_finite(t);
    const auto omega = frequencies();
    const double scale = std::sqrt(1.0 / d_);
    std::vector<double> out(2 * d_);
    for (int i = 0; i < d_; ++i) {
        const double phase = t * omega[i];
        out[2 * i] = scale * std::cos(phase);
        out[2 * i + 1] = scale * std::sin(phase);
    }
    return out;
}

ad::Tensor BochnerInvCdf::embed_graph(ad::Tape& tape, const ad::Tensor& times) const {
    require_finite_times(times);
    auto h1 = tape.relu(tape.add_bias_row(tape.matmul(u_col_, w1_), b1_));
    auto h2 = tape.relu(tape.add_bias_row(tape.matmul(h1, w2_), b2_));
    auto omega_col = tape.add_bias_row(tape.matmul(h2, w3_), b3_);
    auto phases = tape.matmul(times, tape.transpose(omega_col));
    auto feats = tape.interleave_cols(tape.cos(phases), tape.sin(phases));
    return tape.scale(feats, std::sqrt(1.0 / d_));
}

// ---------------------------------------------------------------------------
// BochnerNonParam: the transformed samples themselves are the parameters.

BochnerNonParam::BochnerNonParam(std::vector<double> omegas) : d_(static_cast<int>(omegas.size())) {
    if (d_ < 1) throw ConfigError("BochnerNonParam: need at least one frequency");
    omega_ = ad::tensor({1, d_}, std::move(omegas), true, "embed.omega");
}

std::vector<double> BochnerNonParam::embed(double t) const {
    require_finite(t);
    const double scale = std::sqrt(1.0 / d_);
    std::vector<double> out(2 * d_);
    for (int i = 0; i < d_; ++i) {
        const double phase = t * omega_->data[i];
        out[2 * i] = scale * std::cos(phase);
        out[2 * i + 1] = scale * std::sin(phase);
    }
    return out;
}

ad::Tensor BochnerNonParam::embed_graph(ad::Tape& tape, const ad::Tensor& times) const {
    require_finite_times(times);
    auto phases = tape.matmul(times, omega_);
    auto feats = tape.interleave_cols(tape.cos(phases), tape.sin(phases));
    return tape.scale(feats, std::sqrt(1.0 / d_));
}

// ---------------------------------------------------------------------------
// Mercer: per base period tau, the block
//   [s0, s_c1 cos(pi t/tau), s_s1 sin(pi t/tau), ..., s_cj cos(j pi t/tau), s_sj sin(j pi t/tau)]
// Coefficients are stored as signed square roots: the induced kernel weight of
// each harmonic is the square of the stored value, hence non-negative.

Mercer::Mercer(std::vector<double> periods, int jmax, bool intercept, bool tied, bool train_periods)
    : k_(static_cast<int>(periods.size())),
      jmax_(jmax),
      intercept_(intercept),
      tied_(tied),
      train_periods_(train_periods) {
    if (k_ < 1) throw ConfigError("Mercer: need at least one period");
    if (jmax_ < 1) throw ConfigError("Mercer: jmax must be >= 1");
    for (double p : periods) {
        if (!(p > 0.0)) throw ConfigError("Mercer: periods must be positive");
    }
    if (train_periods_) {
        std::vector<double> lp(k_);
        for (int f = 0; f < k_; ++f) lp[f] = std::log(periods[f]);
        log_periods_ = ad::tensor({1, k_}, std::move(lp), true, "embed.mercer.log_periods");
    } else {
        fixed_periods_ = periods;
    }
    const double init = 1.0 / std::sqrt(static_cast<double>(dim()));
    if (intercept_) {
        intercept_coeff_ = ad::full({1, k_}, init, true);
        intercept_coeff_->name = "embed.mercer.intercept";
    }
    cos_coeff_ = ad::full({1, k_ * jmax_}, init, true);
    cos_coeff_->name = "embed.mercer.cos_coeff";
    if (tied_) {
        sin_coeff_ = cos_coeff_;
    } else {
        sin_coeff_ = ad::full({1, k_ * jmax_}, init, true);
        sin_coeff_->name = "embed.mercer.sin_coeff";
    }
}

int Mercer::dim() const { return k_ * (2 * jmax_ + (intercept_ ? 1 : 0)); }

std::vector<double> Mercer::periods() const {
    if (!train_periods_) return fixed_periods_;
    std::vector<double> p(k_);
    for (int f = 0; f < k_; ++f) p[f] = std::exp(log_periods_->data[f]);
    return p;
}

std::vector<ad::Tensor> Mercer::trainables() const {
    std::vector<ad::Tensor> out;
    if (intercept_) out.push_back(intercept_coeff_);
    out.push_back(cos_coeff_);
    if (!tied_) out.push_back(sin_coeff_);
    if (train_periods_) out.push_back(log_periods_);
    return out;
}

std::vector<double> Mercer::embed(double t) const {
    require_finite(t);
    const auto taus = periods();
    std::vector<double> out(dim());
    size_t o = 0;
    for (int f = 0; f < k_; ++f) {
        const double base = kPi * t / taus[f];
        if (intercept_) out[o++] = intercept_coeff_->data[f];
        for (int m = 1; m <= jmax_; ++m) {
            const double phase = base * m;
            out[o++] = cos_coeff_->data[f * jmax_ + m - 1] * std::cos(phase);
            out[o++] = sin_coeff_->data[f * jmax_ + m - 1] * std::sin(phase);
        }
    }
    return out;
}

ad::Tensor Mercer::embed_graph(ad::Tape& tape, const ad::Tensor& times) const {
    require_finite_times(times);
    const int q = times->rows();
    const int kj = k_ * jmax_;

    ad::Tensor hrow; // [1, k*jmax]: harmonic angular rates m*pi/tau, f-major
    if (train_periods_) {
        std::vector<double> harm(jmax_);
        for (int m = 1; m <= jmax_; ++m) harm[m - 1] = kPi * m;
        auto harm_row = ad::tensor({1, jmax_}, harm);
        auto inv_tau = tape.exp(tape.scale(log_periods_, -1.0));
        std::vector<ad::Tensor> parts;
        parts.reserve(k_);
        for (int f = 0; f < k_; ++f) {
            parts.push_back(tape.matmul(tape.slice(inv_tau, 0, 1, f, f + 1), harm_row));
        }
        hrow = tape.concat_cols(parts);
    } else {
        std::vector<double> h(kj);
        for (int f = 0; f < k_; ++f)
            for (int m = 1; m <= jmax_; ++m) h[f * jmax_ + m - 1] = kPi * m / fixed_periods_[f];
        hrow = ad::tensor({1, kj}, std::move(h));
    }

    auto phases = tape.matmul(times, hrow);
    auto ones_q = ad::full({q, 1}, 1.0);
    auto cs = tape.mul(tape.cos(phases), tape.matmul(ones_q, cos_coeff_));
    auto ss = tape.mul(tape.sin(phases), tape.matmul(ones_q, sin_coeff_));
    auto inter = tape.interleave_cols(cs, ss); // [q, 2*k*jmax], f-major blocks
    if (!intercept_) return inter;

    auto icols = tape.matmul(ones_q, intercept_coeff_); // [q, k]
    std::vector<ad::Tensor> parts;
    parts.reserve(2 * k_);
    for (int f = 0; f < k_; ++f) {
        parts.push_back(tape.slice(icols, 0, q, f, f + 1));
        parts.push_back(tape.slice(inter, 0, q, f * 2 * jmax_, (f + 1) * 2 * jmax_));
    }
    return tape.concat_cols(parts);
}

// ---------------------------------------------------------------------------

std::unique_ptr<TimeEmbedder> make_embedder(const EmbedderConfig& cfg, rng::Stream init) {
    switch (cfg.family) {
        case Family::BochnerNormal:
            return std::make_unique<BochnerNormal>(cfg.d, init);
        case Family::BochnerInvCdf:
            return std::make_unique<BochnerInvCdf>(cfg.d, init);
        case Family::BochnerNonParam: {
            const auto geo = init_frequencies_geometric(cfg.tau_min, cfg.tau_max, cfg.d);
            std::vector<double> omegas(geo.periods.size());
            for (size_t i = 0; i < omegas.size(); ++i) omegas[i] = 1.0 / geo.periods[i];
            return std::make_unique<BochnerNonParam>(std::move(omegas));
        }
        case Family::Mercer: {
            const auto geo = init_frequencies_geometric(cfg.tau_min, cfg.tau_max, cfg.k);
            return std::make_unique<Mercer>(geo.periods, cfg.jmax, cfg.intercept, cfg.tied,
                                            cfg.train_periods);
        }
    }
    throw ConfigError("make_embedder: unknown family");
}

} // namespace tempo::emb
