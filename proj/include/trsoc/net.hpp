#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trsoc/problem.hpp"
#include "trsoc/tensor.hpp"

namespace trsoc {

struct NetConfig {
    int dim = 1;
    int layers = 4;       // affine transforms per MLP; GELU between all but the last
    int width = 64;
    int fourier = 32;     // harmonics; time features are (t, cos/sin(2 pi k t / T))
    double eta = 1.0;     // prior scale in the x/eta^2 gate term
    double horizon = 1.0;

    int feature_dim() const { return 1 + 2 * fourier; }
};

// Control u(x,t) = f1(x, phi(t)) + f2(phi(t)) * x / eta^2 with MLP trunk f1 and
// scalar MLP gate f2. Final layers of both MLPs are zero-initialized so the
// initial control is identically zero.
class ControlNet final : public BatchControl {
public:
    ControlNet(NetConfig cfg, std::uint64_t init_seed);

    int dim() const override { return cfg_.dim; }
    const NetConfig& config() const { return cfg_; }

    // Tape-free forward; usable as a simulation control.
    void eval(std::span<const double> x, int count, double t, std::span<double> out) const override;

    // Tape forward over a time-major flat batch: x_id holds len(times)*copies
    // rows of dimension d, where row j*copies+k is trajectory k at times[j].
    // Returns the node id of the control output (same shape as x_id).
    int forward(Tape& tape, int x_id, std::span<const double> times, int copies);

    std::vector<Param*> params();
    std::vector<double> flat_params() const;
    void set_flat_params(std::span<const double> v);
    std::size_t param_count() const;
    void zero_grad();

    // Scales the final gate layer in place (structural linearity checks).
    void scale_gate_output(double factor);
    // Scales both final layers, shrinking the whole control output.
    void scale_output(double factor);
    // Scales every parameter (used to build small random perturbation nets).
    void scale_all(double factor);

    std::vector<double> fourier_features(double t) const;

    void save_checkpoint(const std::string& path, std::uint64_t seed) const;
    // Returns the net stored in the file; throws on malformed headers.
    static ControlNet load_checkpoint(const std::string& path, std::uint64_t* seed_out = nullptr);

private:
    NetConfig cfg_;
    std::vector<Param> trunk_w_, trunk_b_, gate_w_, gate_b_;

    void raw_mlp(const std::vector<Param>& ws, const std::vector<Param>& bs, const double* in, int rows,
                 int in_dim, double* out, int out_dim) const;
};

}  // namespace trsoc
