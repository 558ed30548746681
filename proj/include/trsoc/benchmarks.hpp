#pragma once

#include <memory>
#include <vector>

#include "trsoc/problem.hpp"
#include "trsoc/time_grid.hpp"

namespace trsoc {

// Gaussian mixture with diagonal covariances (one variance per component,
// shared across coordinates).
struct GmmTarget {
    int dim = 1;
    std::vector<double> weights;  // sum to 1
    std::vector<double> means;    // components x dim, row-major
    std::vector<double> vars;     // per-component variance

    int components() const { return static_cast<int>(weights.size()); }
    void validate() const;
};

double gmm_log_density(const GmmTarget& g, const double* x);
void gmm_grad_log_density(const GmmTarget& g, const double* x, double* out);
void gmm_sample(const GmmTarget& g, RandomStream& rs, double* out);

// Denoising-diffusion sampler setup: controlled ergodic OU process
//   dX = (-zeta(t) X + sigma(t) u) dt + sigma(t) dW,  sigma = eta sqrt(2 zeta),
// started at its stationary measure N(0, eta^2 I), with terminal cost
//   g(x) = log N(x; 0, eta^2 I) - log rho_target(x).
// The cos^2 schedule is zeta(t) = (cmax - cmin) cos^2(pi t / 2T) + cmin.
struct DdsSpec {
    double eta = 1.0;
    double cmin = 0.01;
    double cmax = 10.0;
    double horizon = 1.0;

    double zeta(double t) const;
    // int_0^t zeta, from a cached cumulative trapezoid over a fine grid.
    double zeta_integral(double t) const;

    void prime_cache() const;

private:
    mutable std::vector<double> cache_;  // cumulative integral on a uniform grid
    static constexpr int kCachePoints = 10000;
};

// Marginal Q_t of the optimal path measure for a GMM target: component means
// shrink by exp(-int_t^T zeta) and variances relax toward eta^2.
GmmTarget gmm_marginal(const DdsSpec& dds, const GmmTarget& target, double t);

// Analytic optimal control u*(x,t) = eta sqrt(2 zeta(t)) grad log(Q_t/P_t)(x)
// with P_t = N(0, eta^2 I) for all t.
class GmmOptimalControl final : public BatchControl {
public:
    GmmOptimalControl(DdsSpec dds, GmmTarget target);
    int dim() const override { return target_.dim; }
    void eval(std::span<const double> x, int count, double t, std::span<double> out) const override;

private:
    DdsSpec dds_;
    GmmTarget target_;
};

// SOC problem for sampling from a GMM via DDS.
SocProblem make_dds_gmm_problem(const DdsSpec& dds, const GmmTarget& target);

// Many Well target: log rho(x) = -sum_{i<m} (x_i^2-delta)^2 - 0.5 sum_{i>=m} x_i^2.
struct ManyWell {
    int dim = 5;
    int wells = 5;      // m
    double delta = 4.0;

    double log_density(const double* x) const;
    void grad_log_density(const double* x, double* out) const;
    // m log int exp(-(x^2-delta)^2) dx + (d-m) 0.5 log(2 pi), by adaptive
    // quadrature on [-10, 10].
    double log_z_reference() const;
};

SocProblem make_dds_manywell_problem(const DdsSpec& dds, const ManyWell& mw);

// Adaptive Simpson quadrature (used for the Many Well reference and tests).
double adaptive_quadrature(const std::function<double(double)>& f, double lo, double hi,
                           double tol = 1e-12);

// Quadratic OU / LQR: b = A x, f = x^T P x, g = x^T Q x, sigma = sigma0,
// all diagonal-scalar here, x_init ~ init_scale * N(0, I).
struct LqrSpec {
    int dim = 1;
    double a = 0.2;
    double p = 0.2;
    double q = 0.1;
    double sigma0 = 1.0;
    double init_scale = 0.5;
    double horizon = 1.0;

    static LqrSpec easy(int dim);
    static LqrSpec hard(int dim);
};

SocProblem make_lqr_problem(const LqrSpec& spec);

// Backward RK4 solve of dF/dt = -(A^T F + F A - 2 F sigma0 sigma0^T F + P),
// F(T) = Q, reduced to a scalar since the presets are multiples of I.
// Dense output with linear interpolation. Throws when |F| exceeds 1e6.
struct RiccatiSolution {
    double horizon = 1.0;
    std::vector<double> times;   // fine uniform grid
    std::vector<double> values;  // F(t), scalar

    double at(double t) const;
};

RiccatiSolution riccati_reference(const LqrSpec& spec, int resolution = 10000);

// Optimal control u*(x,t) = -2 sigma0^T F(t) x.
class RiccatiControl final : public BatchControl {
public:
    RiccatiControl(LqrSpec spec, RiccatiSolution sol) : spec_(spec), sol_(std::move(sol)) {}
    int dim() const override { return spec_.dim; }
    void eval(std::span<const double> x, int count, double t, std::span<double> out) const override {
        const double c = -2.0 * spec_.sigma0 * sol_.at(t);
        for (std::size_t i = 0; i < static_cast<std::size_t>(count) * spec_.dim; ++i) out[i] = c * x[i];
    }

private:
    LqrSpec spec_;
    RiccatiSolution sol_;
};

// Seeded benchmark presets.
GmmTarget gmm_preset(int dim, int components, double box, std::uint64_t seed);  // weight ratio 3
GmmTarget gmm40_preset(int dim, std::uint64_t seed);                            // means in [-40,40]

}  // namespace trsoc
