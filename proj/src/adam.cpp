#include "trsoc/adam.hpp"

#include <cmath>

namespace trsoc {

Adam::Adam(AdamConfig cfg, const std::vector<Param*>& params) : cfg_(cfg) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Param* p : params) {
        m_.emplace_back(p->size(), 0.0);
        v_.emplace_back(p->size(), 0.0);
    }
}

void Adam::step(const std::vector<Param*>& params) {
    require(params.size() == m_.size(), "Adam::step: parameter list changed size");
    double norm_sq = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        for (double g : params[i]->grad) {
            if (!std::isfinite(g))
                fail_runtime("Adam::step: non-finite gradient in parameter '", params[i]->name,
                             "', step rejected");
            norm_sq += g * g;
        }
    }
    const double norm = std::sqrt(norm_sq);
    if (!std::isfinite(norm))
        fail_runtime("Adam::step: gradient norm overflow, step rejected");
    const double gscale = (norm > cfg_.clip && norm > 0.0) ? cfg_.clip / norm : 1.0;

    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, step_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, step_);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Param& p = *params[i];
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double g = gscale * p.grad[j];
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p.value[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace trsoc
