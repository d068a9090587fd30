#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tempo/errors.hpp"
#include "tempo/rng.hpp"

namespace tempo::kern {

/// An analytic translation-invariant kernel with its spectral density,
/// normalized so psi(0) = 1. Serves as ground truth for approximation studies.
struct KernelSpec {
    std::string name;
    std::function<double(double)> psi;
    std::function<double(rng::Stream&)> sample_omega;
    double sigma_p2 = 0.0; // second moment of the spectral density
    double t_max = 1.0;    // domain half-width
};

/// psi(delta) = exp(-sigma^2 delta^2 / 2); spectral density N(0, sigma^2).
KernelSpec gaussian_kernel(double sigma = 1.0, double t_max = 4.0);

struct Claim1Bound {
    double raw = 0.0;     // 4 sqrt(sigma_p2) sqrt(t_max/eps) exp(-d eps^2 / 32)
    double clamped = 0.0; // min(raw, 1) for probability reporting
};

Claim1Bound claim1_bound(double sigma_p2, double t_max, double eps, int d);

struct McRow {
    int d = 0;
    double mean_sup_error = 0.0;
    double max_sup_error = 0.0;
};

/// For each d and trial: draw d frequencies, build the random feature map and
/// measure sup over the delta grid of |estimate - psi|. Trials are aggregated
/// in seed order.
std::vector<McRow> mc_approximation_study(const KernelSpec& spec, const std::vector<int>& d_list,
                                          int num_trials, double grid_step, uint64_t seed);

/// Periodic even kernel on [-1,1] with known cosine series
/// psi(t) = a0/2 + sum_j a_j cos(pi j t), extended periodically.
struct PeriodicKernelSpec {
    std::string name;
    std::vector<double> fourier_coeffs; // a_0, a_1, ..., indexable up to the largest degree used
    double lipschitz = 1.0;
    std::function<double(double)> psi; // periodic extension over the real line
};

PeriodicKernelSpec triangle_kernel(int max_degree = 64);
PeriodicKernelSpec cosine_kernel(int max_degree = 64);

struct EigenResidual {
    double coeff = 0.0;        // c_j from quadrature
    double residual_cos = 0.0; // max_t | integral psi(t-s)cos(pi j s) ds - c_j cos(pi j t) |
    double residual_sin = 0.0;
};

/// Verifies that the Fourier basis diagonalizes the kernel operator, by
/// composite Simpson quadrature. quad_points is rounded up to a multiple of
/// 128 so panel boundaries line up with the kernel kinks and the t-grid.
EigenResidual eigenfunction_residual(const PeriodicKernelSpec& spec, int j, int quad_points);

/// Sup over a 1e-3 grid on [-1,1] of |psi - S_d| for each partial-sum degree.
std::vector<std::pair<int, double>> truncation_decay(const PeriodicKernelSpec& spec,
                                                     const std::vector<int>& d_list);

/// Eigenvalues of a symmetric matrix by cyclic Jacobi, ascending.
std::vector<double> symmetric_eigenvalues(std::vector<std::vector<double>> a);
double min_eigenvalue(const std::vector<std::vector<double>>& a);

/// Gram matrix of an analytic kernel on a grid.
std::vector<std::vector<double>> gram_from_kernel(const std::function<double(double)>& psi,
                                                  const std::vector<double>& grid);

} // namespace tempo::kern
