#pragma once

#include <memory>
#include <vector>

#include "tempo/rng.hpp"
#include "tempo/tensor.hpp"

namespace tempo::emb {

enum class Family { BochnerNormal, BochnerInvCdf, BochnerNonParam, Mercer };

struct EmbedderConfig {
    Family family = Family::BochnerNonParam;
    int d = 16;             // Bochner sample count; output dimension is 2d
    int k = 5;              // Mercer: number of base frequencies
    int jmax = 2;           // Mercer: truncation degree per frequency
    bool intercept = true;  // Mercer: include the constant component per frequency
    bool tied = false;      // Mercer: tie cos/sin coefficient pairs (exactly invariant)
    bool train_periods = false;
    double tau_min = 0.1;   // period range used for frequency initialization
    double tau_max = 50.0;
};

/// A parameterized map from a time scalar to a real vector. Evaluation is
/// pure given the parameters; parameter updates are synchronized externally.
class TimeEmbedder {
public:
    virtual ~TimeEmbedder() = default;

    virtual int dim() const = 0;

    /// Plain evaluation (no tape). Rejects NaN/Inf times.
    virtual std::vector<double> embed(double t) const = 0;

    /// Differentiable evaluation of a column of times [q,1] -> [q,dim].
    virtual ad::Tensor embed_graph(ad::Tape& tape, const ad::Tensor& times) const = 0;

    /// Trainable parameter tensors, named, in a fixed order.
    virtual std::vector<ad::Tensor> trainables() const = 0;
};

/// <embed(t1), embed(t2)>.
double kernel_estimate(const TimeEmbedder& e, double t1, double t2);

struct GeometricInit {
    std::vector<double> periods;
    bool degenerate = false; // fell back to log spacing (span <= 1)
};

/// Periods tau_i = tau_min + (tau_max - tau_min)^(i/n), i = 1..n. When the
/// span is <= 1 the power collapses onto a point, so we warn via the
/// `degenerate` flag and fall back to log-spaced periods instead.
GeometricInit init_frequencies_geometric(double tau_min, double tau_max, int n);

/// Row i = embed(grid[i]).
std::vector<std::vector<double>> phi_matrix(const TimeEmbedder& e, const std::vector<double>& grid);

/// Gram[i][j] = kernel_estimate(grid[i], grid[j]).
std::vector<std::vector<double>> gram_matrix(const TimeEmbedder& e, const std::vector<double>& grid);

// Concrete families. Tests and the model construct them either directly or
// through make_embedder below.

class BochnerNormal final : public TimeEmbedder {
public:
    BochnerNormal(int d, rng::Stream noise);
    int dim() const override { return 2 * d_; }
    std::vector<double> embed(double t) const override;
    ad::Tensor embed_graph(ad::Tape& tape, const ad::Tensor& times) const override;
    std::vector<ad::Tensor> trainables() const override { return {mu_, sigma_raw_}; }

    double sigma() const; // softplus of the raw parameter
    ad::Tensor mu_param() const { return mu_; }
    ad::Tensor sigma_raw_param() const { return sigma_raw_; }

private:
    int d_;
    ad::Tensor mu_;
    ad::Tensor sigma_raw_;
    ad::Tensor eps_row_; // frozen auxiliary draws, [1,d]
};

class BochnerInvCdf final : public TimeEmbedder {
public:
    static constexpr int kHidden = 32;
    BochnerInvCdf(int d, rng::Stream init);
    int dim() const override { return 2 * d_; }
    std::vector<double> embed(double t) const override;
    ad::Tensor embed_graph(ad::Tape& tape, const ad::Tensor& times) const override;
    std::vector<ad::Tensor> trainables() const override;

    /// Frequencies produced by the current approximator, one per sample.
    std::vector<double> frequencies() const;

private:
    int d_;
    ad::Tensor w1_, b1_, w2_, b2_, w3_, b3_;
    ad::Tensor u_col_; // frozen uniform draws, [d,1]
};

class BochnerNonParam final : public TimeEmbedder {
public:
    explicit BochnerNonParam(std::vector<double> omegas);
    int dim() const override { return 2 * d_; }
    std::vector<double> embed(double t) const override;
    ad::Tensor embed_graph(ad::Tape& tape, const ad::Tensor& times) const override;
    std::vector<ad::Tensor> trainables() const override { return {omega_}; }
    ad::Tensor omega_param() const { return omega_; }

private:
    int d_;
    ad::Tensor omega_; // [1,d], trainable
};

class Mercer final : public TimeEmbedder {
public:
    Mercer(std::vector<double> periods, int jmax, bool intercept, bool tied, bool train_periods);
    int dim() const override;
    std::vector<double> embed(double t) const override;
    ad::Tensor embed_graph(ad::Tape& tape, const ad::Tensor& times) const override;
    std::vector<ad::Tensor> trainables() const override;

    int k() const { return k_; }
    int jmax() const { return jmax_; }
    ad::Tensor intercept_param() const { return intercept_coeff_; }
    ad::Tensor cos_coeff_param() const { return cos_coeff_; }
    ad::Tensor sin_coeff_param() const { return sin_coeff_; }
    std::vector<double> periods() const;

private:
    int k_, jmax_;
    bool intercept_, tied_, train_periods_;
    std::vector<double> fixed_periods_;
    ad::Tensor log_periods_;      // [1,k] when train_periods
    ad::Tensor intercept_coeff_;  // [1,k] when intercept
    ad::Tensor cos_coeff_;        // [1,k*jmax], f-major
    ad::Tensor sin_coeff_;        // aliases cos_coeff_ when tied
};

std::unique_ptr<TimeEmbedder> make_embedder(const EmbedderConfig& cfg, rng::Stream init);

} // namespace tempo::emb
