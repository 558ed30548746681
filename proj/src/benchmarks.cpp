#include "trsoc/benchmarks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace trsoc {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm,
               double fb, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0) fail_runtime("adaptive_quadrature: recursion limit reached on [", a, ",", b, "]");
    if (std::abs(left + right - whole) <= 15.0 * tol) return left + right + (left + right - whole) / 15.0;
    return simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}
}  // namespace

double adaptive_quadrature(const std::function<double(double)>& f, double lo, double hi, double tol) {
    const double fa = f(lo), fb = f(hi), fm = f(0.5 * (lo + hi));
    const double whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson(f, lo, hi, fa, fm, fb, whole, tol, 60);
}

// ---------------------------------------------------------------- GmmTarget

void GmmTarget::validate() const {
    require(dim >= 1 && components() >= 1, "GmmTarget: empty mixture");
    require(means.size() == static_cast<std::size_t>(components()) * dim, "GmmTarget: means size mismatch");
    require(vars.size() == weights.size(), "GmmTarget: vars size mismatch");
    double s = 0.0;
    for (double w : weights) {
        require(w >= 0.0, "GmmTarget: weights must be nonnegative");
        s += w;
    }
    require(std::abs(s - 1.0) <= 1e-9, "GmmTarget: weights must sum to 1");
    for (double v : vars) require(v > 0.0, "GmmTarget: variances must be positive");
}

double gmm_log_density(const GmmTarget& g, const double* x) {
    const int K = g.components(), d = g.dim;
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> lp(K);
    for (int k = 0; k < K; ++k) {
        double q = 0.0;
        const double* mu = g.means.data() + static_cast<std::size_t>(k) * d;
        for (int i = 0; i < d; ++i) {
            const double z = x[i] - mu[i];
            q += z * z;
        }
        lp[k] = std::log(g.weights[k]) - 0.5 * q / g.vars[k] - 0.5 * d * (kLog2Pi + std::log(g.vars[k]));
        best = std::max(best, lp[k]);
    }
    double s = 0.0;
    for (int k = 0; k < K; ++k) s += std::exp(lp[k] - best);
    return best + std::log(s);
}

void gmm_grad_log_density(const GmmTarget& g, const double* x, double* out) {
    const int K = g.components(), d = g.dim;
    std::vector<double> lp(K);
    double best = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
        double q = 0.0;
        const double* mu = g.means.data() + static_cast<std::size_t>(k) * d;
        for (int i = 0; i < d; ++i) {
            const double z = x[i] - mu[i];
            q += z * z;
        }
        lp[k] = std::log(g.weights[k]) - 0.5 * q / g.vars[k] - 0.5 * d * (kLog2Pi + std::log(g.vars[k]));
        best = std::max(best, lp[k]);
    }
    double norm = 0.0;
    for (int k = 0; k < K; ++k) {
        lp[k] = std::exp(lp[k] - best);
        norm += lp[k];
    }
    std::fill(out, out + d, 0.0);
    for (int k = 0; k < K; ++k) {
        const double r = lp[k] / norm;
        const double* mu = g.means.data() + static_cast<std::size_t>(k) * d;
        for (int i = 0; i < d; ++i) out[i] -= r * (x[i] - mu[i]) / g.vars[k];
    }
}

void gmm_sample(const GmmTarget& g, RandomStream& rs, double* out) {
    const double u = rs.uniform();
    double acc = 0.0;
    int pick = g.components() - 1;
    for (int k = 0; k < g.components(); ++k) {
        acc += g.weights[k];
        if (u <= acc) {
            pick = k;
            break;
        }
    }
    const double sd = std::sqrt(g.vars[pick]);
    const double* mu = g.means.data() + static_cast<std::size_t>(pick) * g.dim;
    for (int i = 0; i < g.dim; ++i) out[i] = mu[i] + sd * rs.normal();
}

// ------------------------------------------------------------------ DdsSpec

double DdsSpec::zeta(double t) const {
    const double c = std::cos(1.5707963267948966 * t / horizon);
    return (cmax - cmin) * c * c + cmin;
}

void DdsSpec::prime_cache() const {
    if (!cache_.empty()) return;
    cache_.resize(kCachePoints + 1);
    cache_[0] = 0.0;
    const double h = horizon / kCachePoints;
    for (int i = 1; i <= kCachePoints; ++i) {
        const double a = (i - 1) * h, b = i * h;
        cache_[i] = cache_[i - 1] + 0.5 * h * (zeta(a) + zeta(b));
    }
}

double DdsSpec::zeta_integral(double t) const {
    prime_cache();
    require(t >= 0.0 && t <= horizon + 1e-12, "DdsSpec: time out of range");
    const double pos = std::min(t, horizon) / horizon * kCachePoints;
    const int i = std::min(static_cast<int>(pos), kCachePoints - 1);
    const double frac = pos - i;
    return cache_[i] + frac * (cache_[i + 1] - cache_[i]);
}

GmmTarget gmm_marginal(const DdsSpec& dds, const GmmTarget& target, double t) {
    target.validate();
    const double it = dds.zeta_integral(dds.horizon) - dds.zeta_integral(t);  // int_t^T zeta
    const double shrink = std::exp(-it);
    const double eta2 = dds.eta * dds.eta;
    GmmTarget out = target;
    for (auto& m : out.means) m *= shrink;
    for (auto& v : out.vars) v = v * shrink * shrink + eta2 * (1.0 - shrink * shrink);
    return out;
}

GmmOptimalControl::GmmOptimalControl(DdsSpec dds, GmmTarget target)
    : dds_(std::move(dds)), target_(std::move(target)) {
    target_.validate();
    dds_.prime_cache();
}

void GmmOptimalControl::eval(std::span<const double> x, int count, double t, std::span<double> out) const {
    const int d = target_.dim;
    const GmmTarget qt = gmm_marginal(dds_, target_, t);
    const double scale = dds_.eta * std::sqrt(2.0 * dds_.zeta(t));
    const double inv_eta2 = 1.0 / (dds_.eta * dds_.eta);
    parallel_for(count, [&](std::size_t k0, std::size_t k1) {
        std::vector<double> grad(d);
        for (std::size_t k = k0; k < k1; ++k) {
            const double* xi = x.data() + k * d;
            gmm_grad_log_density(qt, xi, grad.data());
            for (int i = 0; i < d; ++i)
                out[k * d + i] = scale * (grad[i] + xi[i] * inv_eta2);  // -grad log P_t = x/eta^2
        }
    }, 1024);
}

namespace {
SocProblem make_dds_base(const DdsSpec& dds, int dim) {
    dds.prime_cache();
    SocProblem p;
    p.dim = dim;
    p.zero_running_cost = true;
    p.linear_drift_coef = [dds](double t) { return -dds.zeta(t); };
    p.drift = [dds, dim](const double* x, double t, double* out) {
        const double z = -dds.zeta(t);
        for (int i = 0; i < dim; ++i) out[i] = z * x[i];
    };
    p.drift_jacobian_transpose = [dds, dim](const double* v, const double*, double t, double* out) {
        const double z = -dds.zeta(t);
        for (int i = 0; i < dim; ++i) out[i] = z * v[i];
    };
    p.sigma = [dds](double t) { return dds.eta * std::sqrt(2.0 * dds.zeta(t)); };
    p.running_cost = [](const double*, double) { return 0.0; };
    p.running_cost_grad = [dim](const double*, double, double* out) { std::fill(out, out + dim, 0.0); };
    const double eta = dds.eta;
    p.sample_initial = [eta, dim](RandomStream& rs, double* out) {
        for (int i = 0; i < dim; ++i) out[i] = eta * rs.normal();
    };
    return p;
}

double log_prior_density(double eta, int dim, const double* x) {
    double q = 0.0;
    for (int i = 0; i < dim; ++i) q += x[i] * x[i];
    return -0.5 * q / (eta * eta) - 0.5 * dim * (kLog2Pi + 2.0 * std::log(eta));
}
}  // namespace

SocProblem make_dds_gmm_problem(const DdsSpec& dds, const GmmTarget& target) {
    target.validate();
    SocProblem p = make_dds_base(dds, target.dim);
    const double eta = dds.eta;
    const int dim = target.dim;
    p.terminal_cost = [eta, dim, target](const double* x) {
        return log_prior_density(eta, dim, x) - gmm_log_density(target, x);
    };
    p.terminal_cost_grad = [eta, dim, target](const double* x, double* out) {
        gmm_grad_log_density(target, x, out);
        const double inv = 1.0 / (eta * eta);
        for (int i = 0; i < dim; ++i) out[i] = -x[i] * inv - out[i];
    };
    return p;
}

// ----------------------------------------------------------------- ManyWell

double ManyWell::log_density(const double* x) const {
    double s = 0.0;
    for (int i = 0; i < wells; ++i) {
        const double z = x[i] * x[i] - delta;
        s -= z * z;
    }
    for (int i = wells; i < dim; ++i) s -= 0.5 * x[i] * x[i];
    return s;
}

void ManyWell::grad_log_density(const double* x, double* out) const {
    for (int i = 0; i < wells; ++i) out[i] = -4.0 * x[i] * (x[i] * x[i] - delta);
    for (int i = wells; i < dim; ++i) out[i] = -x[i];
}

double ManyWell::log_z_reference() const {
    require(wells <= dim, "ManyWell: wells must not exceed dim");
    const double delta_ = delta;
    const double one_d = adaptive_quadrature(
        [delta_](double x) {
            const double z = x * x - delta_;
            return std::exp(-z * z);
        },
        -10.0, 10.0, 1e-13);
    return wells * std::log(one_d) + (dim - wells) * 0.5 * kLog2Pi;
}

SocProblem make_dds_manywell_problem(const DdsSpec& dds, const ManyWell& mw) {
    SocProblem p = make_dds_base(dds, mw.dim);
    const double eta = dds.eta;
    const int dim = mw.dim;
    p.terminal_cost = [eta, dim, mw](const double* x) {
        return log_prior_density(eta, dim, x) - mw.log_density(x);
    };
    p.terminal_cost_grad = [eta, dim, mw](const double* x, double* out) {
        mw.grad_log_density(x, out);
        const double inv = 1.0 / (eta * eta);
        for (int i = 0; i < dim; ++i) out[i] = -x[i] * inv - out[i];
    };
    return p;
}

// ---------------------------------------------------------------------- LQR

LqrSpec LqrSpec::easy(int dim) { return LqrSpec{dim, 0.2, 0.2, 0.1, 1.0, 0.5, 1.0}; }
LqrSpec LqrSpec::hard(int dim) { return LqrSpec{dim, 1.0, 1.0, 0.5, 1.0, 0.5, 1.0}; }

SocProblem make_lqr_problem(const LqrSpec& spec) {
    SocProblem p;
    const int dim = spec.dim;
    const double a = spec.a, pp = spec.p, q = spec.q, s0 = spec.sigma0, is = spec.init_scale;
    p.dim = dim;
    p.linear_drift_coef = [a](double) { return a; };
    p.drift = [a, dim](const double* x, double, double* out) {
        for (int i = 0; i < dim; ++i) out[i] = a * x[i];
    };
    p.drift_jacobian_transpose = [a, dim](const double* v, const double*, double, double* out) {
        for (int i = 0; i < dim; ++i) out[i] = a * v[i];
    };
    p.sigma = [s0](double) { return s0; };
    p.running_cost = [pp, dim](const double* x, double) {
        double s = 0.0;
        for (int i = 0; i < dim; ++i) s += x[i] * x[i];
        return pp * s;
    };
    p.running_cost_grad = [pp, dim](const double* x, double, double* out) {
        for (int i = 0; i < dim; ++i) out[i] = 2.0 * pp * x[i];
    };
    p.terminal_cost = [q, dim](const double* x) {
        double s = 0.0;
        for (int i = 0; i < dim; ++i) s += x[i] * x[i];
        return q * s;
    };
    p.terminal_cost_grad = [q, dim](const double* x, double* out) {
        for (int i = 0; i < dim; ++i) out[i] = 2.0 * q * x[i];
    };
    p.sample_initial = [is, dim](RandomStream& rs, double* out) {
        for (int i = 0; i < dim; ++i) out[i] = is * rs.normal();
    };
    return p;
}

double RiccatiSolution::at(double t) const {
    require(t >= 0.0 && t <= horizon + 1e-12, "RiccatiSolution: time out of range");
    const double pos = std::min(t, horizon) / horizon * (static_cast<double>(times.size()) - 1.0);
    const std::size_t i = std::min(static_cast<std::size_t>(pos), times.size() - 2);
    const double frac = pos - static_cast<double>(i);
    return values[i] + frac * (values[i + 1] - values[i]);
}

RiccatiSolution riccati_reference(const LqrSpec& spec, int resolution) {
    require(resolution >= 2, "riccati_reference: resolution must be >= 2");
    RiccatiSolution sol;
    sol.horizon = spec.horizon;
    sol.times.resize(resolution + 1);
    sol.values.resize(resolution + 1);
    const double h = spec.horizon / resolution;
    const double a = spec.a, p = spec.p, s2 = spec.sigma0 * spec.sigma0;
    auto rhs = [&](double f) { return -(2.0 * a * f - 2.0 * f * f * s2 + p); };
    double f = spec.q;  // F(T) = Q
    sol.times[resolution] = spec.horizon;
    sol.values[resolution] = f;
    for (int i = resolution; i > 0; --i) {
        // RK4 step backward in time (step -h)
        const double k1 = rhs(f);
        const double k2 = rhs(f - 0.5 * h * k1);
        const double k3 = rhs(f - 0.5 * h * k2);
        const double k4 = rhs(f - h * k3);
        f -= h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        const double t = (i - 1) * h;
        if (std::abs(f) > 1e6) fail_runtime("riccati_reference: solution blow-up at t=", t);
        sol.times[i - 1] = t;
        sol.values[i - 1] = f;
    }
    return sol;
}

// -------------------------------------------------------------------- Presets

GmmTarget gmm_preset(int dim, int components, double box, std::uint64_t seed) {
    RandomStream rs(seed, 0x676d6d);
    GmmTarget g;
    g.dim = dim;
    g.weights.resize(components);
    g.means.resize(static_cast<std::size_t>(components) * dim);
    g.vars.assign(components, 1.0);
    for (auto& m : g.means) m = box * (2.0 * rs.uniform() - 1.0);
    // positive-uniform weights rescaled so max/min = 3
    for (auto& w : g.weights) w = rs.uniform();
    double lo = *std::min_element(g.weights.begin(), g.weights.end());
    double hi = *std::max_element(g.weights.begin(), g.weights.end());
    for (auto& w : g.weights) {
        const double u = (hi == lo) ? 0.5 : (w - lo) / (hi - lo);
        w = 1.0 + 2.0 * u;  // in [1, 3]
    }
    double s = 0.0;
    for (double w : g.weights) s += w;
    for (auto& w : g.weights) w /= s;
    g.validate();
    return g;
}

GmmTarget gmm40_preset(int dim, std::uint64_t seed) { return gmm_preset(dim, 40, 40.0, seed); }

}  // namespace trsoc
