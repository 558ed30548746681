#pragma once

#include <vector>

#include "trsoc/tensor.hpp"

namespace trsoc {

struct AdamConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip = 1.0;  // global gradient norm threshold, applied before the update
};

// Bias-corrected Adam over a fixed parameter list. Gradients are clipped by
// global norm first; a non-finite gradient rejects the whole step and throws,
// naming the offending parameter.
class Adam {
public:
    Adam(AdamConfig cfg, const std::vector<Param*>& params);

    void step(const std::vector<Param*>& params);
    int steps_taken() const { return step_; }
    AdamConfig& config() { return cfg_; }

private:
    AdamConfig cfg_;
    int step_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace trsoc
