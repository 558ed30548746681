#pragma once

#include <functional>
#include <memory>
#include <span>

#include "trsoc/common.hpp"
#include "trsoc/rng.hpp"

namespace trsoc {

// Control u(x,t) evaluated on a whole batch of states at a shared time.
// X and out are K x d row-major.
class BatchControl {
public:
    virtual ~BatchControl() = default;
    virtual int dim() const = 0;
    virtual void eval(std::span<const double> x, int count, double t, std::span<double> out) const = 0;
    bool is_zero() const { return zero_tag_; }

protected:
    bool zero_tag_ = false;
};

class ZeroControl final : public BatchControl {
public:
    explicit ZeroControl(int dim) : dim_(dim) { zero_tag_ = true; }
    int dim() const override { return dim_; }
    void eval(std::span<const double>, int count, double, std::span<double> out) const override {
        std::fill(out.begin(), out.begin() + static_cast<std::size_t>(count) * dim_, 0.0);
    }

private:
    int dim_;
};

// Wraps a per-point function u(x,t).
class FunctionControl final : public BatchControl {
public:
    using Fn = std::function<void(const double* x, double t, double* out)>;
    FunctionControl(int dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {}
    int dim() const override { return dim_; }
    void eval(std::span<const double> x, int count, double t, std::span<double> out) const override {
        for (int k = 0; k < count; ++k)
            fn_(x.data() + static_cast<std::size_t>(k) * dim_, t, out.data() + static_cast<std::size_t>(k) * dim_);
    }

private:
    int dim_;
    Fn fn_;
};

// Sum of two controls, used to probe losses around a known base control.
class SumControl final : public BatchControl {
public:
    SumControl(const BatchControl* a, const BatchControl* b) : a_(a), b_(b) {
        require(a->dim() == b->dim(), "SumControl: dimension mismatch");
    }
    int dim() const override { return a_->dim(); }
    void eval(std::span<const double> x, int count, double t, std::span<double> out) const override {
        a_->eval(x, count, t, out);
        scratch_.assign(static_cast<std::size_t>(count) * a_->dim(), 0.0);
        b_->eval(x, count, t, scratch_);
        for (std::size_t i = 0; i < static_cast<std::size_t>(count) * a_->dim(); ++i) out[i] += scratch_[i];
    }

private:
    const BatchControl* a_;
    const BatchControl* b_;
    mutable std::vector<double> scratch_;
};

// A stochastic optimal control instance: controlled dynamics
//   dX = (b + sigma u) dt + sigma dW,  X_0 ~ p0,
// with running cost f, terminal cost g, and their gradients where needed by
// the adjoint solver. sigma is a scalar diagonal coefficient per time.
struct SocProblem {
    int dim = 1;

    std::function<void(const double* x, double t, double* out)> drift;
    // v -> (grad b)^T v at (x,t); only the adjoint ODE needs it.
    std::function<void(const double* v, const double* x, double t, double* out)> drift_jacobian_transpose;
    std::function<double(double t)> sigma;

    std::function<double(const double* x, double t)> running_cost;
    std::function<void(const double* x, double t, double* out)> running_cost_grad;
    std::function<double(const double* x)> terminal_cost;
    std::function<void(const double* x, double* out)> terminal_cost_grad;

    std::function<void(RandomStream&, double* out)> sample_initial;

    // Set when the drift is b(x,t) = c(t) x; enables the exponential integrator
    // (c < 0) and the closed-form adjoint.
    std::function<double(double t)> linear_drift_coef;
    bool zero_running_cost = false;

    void validate() const {
        require(dim >= 1, "SocProblem: dim must be >= 1");
        require(static_cast<bool>(drift), "SocProblem: drift is required");
        require(static_cast<bool>(sigma), "SocProblem: sigma is required");
        require(static_cast<bool>(running_cost), "SocProblem: running cost is required");
        require(static_cast<bool>(terminal_cost), "SocProblem: terminal cost is required");
        require(static_cast<bool>(sample_initial), "SocProblem: initial sampler is required");
    }
};

}  // namespace trsoc
