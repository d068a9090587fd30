#include "tempo/kernel_lab.hpp"

#include <algorithm>
#include <cmath>

namespace tempo::kern {

namespace {

constexpr double kPi = 3.14159265358979323846;

/// Composite Simpson on [a,b] with n subintervals (n even).
template <typename F>
double simpson(F f, double a, double b, int n) {
    const double h = (b - a) / n;
    double acc = f(a) + f(b);
    for (int i = 1; i < n; ++i) {
        acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    }
    return acc * h / 3.0;
}

} // namespace

KernelSpec gaussian_kernel(double sigma, double t_max) {
    if (!(sigma > 0.0) || !(t_max > 0.0)) throw ConfigError("gaussian_kernel: sigma and t_max must be positive");
    KernelSpec spec;
    spec.name = "gaussian";
    spec.psi = [sigma](double delta) { return std::exp(-0.5 * sigma * sigma * delta * delta); };
    spec.sample_omega = [sigma](rng::Stream& s) { return sigma * s.normal(); };
    spec.sigma_p2 = sigma * sigma;
    spec.t_max = t_max;
    return spec;
}

Claim1Bound claim1_bound(double sigma_p2, double t_max, double eps, int d) {
    if (!(sigma_p2 > 0.0) || !(t_max > 0.0) || !(eps > 0.0) || d < 0) {
        throw InputError("claim1_bound: sigma_p2, t_max, eps must be positive and d >= 0");
    }
    Claim1Bound b;
    b.raw = 4.0 * std::sqrt(sigma_p2) * std::sqrt(t_max / eps) * std::exp(-d * eps * eps / 32.0);
    b.clamped = std::min(b.raw, 1.0);
    return b;
}

std::vector<McRow> mc_approximation_study(const KernelSpec& spec, const std::vector<int>& d_list,
                                          int num_trials, double grid_step, uint64_t seed) {
    if (d_list.empty()) throw ConfigError("mc_approximation_study: empty d list");
    for (size_t i = 1; i < d_list.size(); ++i) {
        if (d_list[i] <= d_list[i - 1]) throw ConfigError("mc_approximation_study: d list must be ascending");
    }
    if (num_trials < 1) throw ConfigError("mc_approximation_study: need at least one trial");
    if (!(grid_step > 0.0)) throw ConfigError("mc_approximation_study: grid step must be positive");

    const int n_grid = static_cast<int>(std::floor(spec.t_max / grid_step + 1e-9)) + 1;
    std::vector<double> psi_ref(n_grid);
    for (int g = 0; g < n_grid; ++g) psi_ref[g] = spec.psi(g * grid_step);

    std::vector<McRow> rows;
    rows.reserve(d_list.size());
    std::vector<double> omegas;
    for (int d : d_list) {
        McRow row;
        row.d = d;
        double sum_sup = 0.0, max_sup = 0.0;
        for (int trial = 0; trial < num_trials; ++trial) {
            auto s = rng::stream(seed, "mc/" + spec.name + "/d=" + std::to_string(d) +
                                           "/trial=" + std::to_string(trial));
            omegas.resize(d);
            for (auto& w : omegas) w = spec.sample_omega(s);
            double sup = 0.0;
            for (int g = 0; g < n_grid; ++g) {
                const double delta = g * grid_step;
                double est = 0.0;
                for (double w : omegas) est += std::cos(w * delta);
                est /= d;
                sup = std::max(sup, std::fabs(est - psi_ref[g]));
            }
            sum_sup += sup;
            max_sup = std::max(max_sup, sup);
        }
        row.mean_sup_error = sum_sup / num_trials;
        row.max_sup_error = max_sup;
        rows.push_back(row);
    }
    return rows;
}

PeriodicKernelSpec triangle_kernel(int max_degree) {
    PeriodicKernelSpec spec;
    spec.name = "triangle";
    spec.fourier_coeffs.resize(max_degree + 1, 0.0);
    spec.fourier_coeffs[0] = 1.0; // so the constant term a0/2 equals 1/2
    for (int j = 1; j <= max_degree; ++j) {
        if (j % 2 == 1) spec.fourier_coeffs[j] = 4.0 / (kPi * kPi * j * j);
    }
    spec.lipschitz = 1.0;
    spec.psi = [](double t) {
        const double u = std::remainder(t, 2.0); // in [-1, 1]
        return 1.0 - std::fabs(u);
    };
    return spec;
}

PeriodicKernelSpec cosine_kernel(int max_degree) {
    PeriodicKernelSpec spec;
    spec.name = "cosine";
    spec.fourier_coeffs.resize(std::max(2, max_degree + 1), 0.0);
    spec.fourier_coeffs[1] = 1.0;
    spec.lipschitz = kPi;
    spec.psi = [](double t) { return std::cos(kPi * t); };
    return spec;
}

EigenResidual eigenfunction_residual(const PeriodicKernelSpec& spec, int j, int quad_points) {
    if (j < 1) throw ConfigError("eigenfunction_residual: j must be >= 1");
    if (quad_points < 512) throw ConfigError("eigenfunction_residual: need quad_points >= 512");

    // even-extension sanity check
    for (double t : {0.13, 0.41, 0.77, 0.95}) {
        if (std::fabs(spec.psi(t) - spec.psi(-t)) > 1e-12) {
            throw ConfigError("eigenfunction_residual: psi is not even");
        }
    }

    // Round the interval count up to a multiple of 128: the 64-point t grid
    // then sits on Simpson panel boundaries, as do the kinks of the bundled
    // kernels, which keeps the composite rule at full order.
    int n = ((quad_points + 127) / 128) * 128;

    const auto& psi = spec.psi;
    const double cj = simpson([&](double u) { return psi(u) * std::cos(kPi * j * u); }, -1.0, 1.0, n);

    EigenResidual out;
    out.coeff = cj;
    const int stride = n / 64;
    for (int g = 0; g < 64; ++g) {
        const double t1 = -1.0 + 2.0 * (g * stride) / n;
        const double conv_cos =
            simpson([&](double t2) { return psi(t1 - t2) * std::cos(kPi * j * t2); }, -1.0, 1.0, n);
        const double conv_sin =
            simpson([&](double t2) { return psi(t1 - t2) * std::sin(kPi * j * t2); }, -1.0, 1.0, n);
        out.residual_cos = std::max(out.residual_cos, std::fabs(conv_cos - cj * std::cos(kPi * j * t1)));
        out.residual_sin = std::max(out.residual_sin, std::fabs(conv_sin - cj * std::sin(kPi * j * t1)));
    }
    return out;
}

std::vector<std::pair<int, double>> truncation_decay(const PeriodicKernelSpec& spec,
                                                     const std::vector<int>& d_list) {
    std::vector<std::pair<int, double>> out;
    out.reserve(d_list.size());
    for (int d : d_list) {
        if (d < 0 || d + 1 > static_cast<int>(spec.fourier_coeffs.size())) {
            throw ConfigError("truncation_decay: coefficients not available up to degree " +
                              std::to_string(d));
        }
        double sup = 0.0;
        const int steps = 2000; // 1e-3 grid on [-1, 1]
        for (int i = 0; i <= steps; ++i) {
            const double t = -1.0 + 2.0 * i / steps;
            double sd = spec.fourier_coeffs[0] / 2.0;
            for (int jj = 1; jj <= d; ++jj) {
                if (spec.fourier_coeffs[jj] != 0.0) sd += spec.fourier_coeffs[jj] * std::cos(kPi * jj * t);
            }
            sup = std::max(sup, std::fabs(spec.psi(t) - sd));
        }
        out.emplace_back(d, sup);
    }
    return out;
}

std::vector<double> symmetric_eigenvalues(std::vector<std::vector<double>> a) {
    const size_t n = a.size();
    for (const auto& row : a) {
        if (row.size() != n) throw DimensionError("symmetric_eigenvalues: matrix is not square");
    }
    double norm = 0.0;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) {
            if (std::fabs(a[i][j] - a[j][i]) > 1e-9 * (1.0 + std::fabs(a[i][j]))) {
                throw InputError("symmetric_eigenvalues: matrix is not symmetric");
            }
            norm += a[i][j] * a[i][j];
        }
    }
    norm = std::sqrt(norm);

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (size_t i = 0; i < n; ++i)
            for (size_t j = i + 1; j < n; ++j) off += a[i][j] * a[i][j];
        if (std::sqrt(2.0 * off) <= 1e-13 * (1.0 + norm)) break;

        for (size_t p = 0; p + 1 < n; ++p) {
            for (size_t q = p + 1; q < n; ++q) {
                const double apq = a[p][q];
                if (std::fabs(apq) <= 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (size_t i = 0; i < n; ++i) {
                    const double aip = a[i][p], aiq = a[i][q];
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for (size_t i = 0; i < n; ++i) {
                    const double api = a[p][i], aqi = a[q][i];
                    a[p][i] = c * api - s * aqi;
                    a[q][i] = s * api + c * aqi;
                }
            }
        }
    }
    std::vector<double> eig(n);
    for (size_t i = 0; i < n; ++i) eig[i] = a[i][i];
    std::sort(eig.begin(), eig.end());
    return eig;
}

double min_eigenvalue(const std::vector<std::vector<double>>& a) {
    const auto eig = symmetric_eigenvalues(a);
    return eig.empty() ? 0.0 : eig.front();
}

std::vector<std::vector<double>> gram_from_kernel(const std::function<double(double)>& psi,
                                                  const std::vector<double>& grid) {
    const size_t n = grid.size();
    std::vector<std::vector<double>> g(n, std::vector<double>(n));
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j <= i; ++j) {
            const double v = psi(grid[i] - grid[j]);
            g[i][j] = v;
            g[j][i] = v;
        }
    }
    return g;
}

} // namespace tempo::kern
