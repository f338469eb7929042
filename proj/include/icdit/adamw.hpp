#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "icdit/tensor.hpp"

namespace icdit {

struct AdamWConfig {
    float lr = 2e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 0.0f;

    void validate() const {
        require(lr >= 0.0f, errc::invalid_argument, "adamw: lr must be >= 0");
        require(beta1 > 0.0f && beta1 < 1.0f, errc::invalid_argument, "adamw: beta1 must be in (0,1)");
        require(beta2 > 0.0f && beta2 < 1.0f, errc::invalid_argument, "adamw: beta2 must be in (0,1)");
        require(eps > 0.0f, errc::invalid_argument, "adamw: eps must be > 0");
        require(weight_decay >= 0.0f, errc::invalid_argument, "adamw: weight_decay must be >= 0");
    }
};

// Per-parameter moments; the step counter increases by exactly one per update.
struct OptimState {
    std::vector<float> m;
    std::vector<float> v;
    int64_t step = 0;
    AdamWConfig hyper;
};

// Decoupled weight decay: the parameter is shrunk by (1 - lr*wd) before the
// bias-corrected moment update is applied.
inline void adamw_step(Tensor& param, const std::vector<float>& grad, OptimState& state) {
    state.hyper.validate();
    auto& p = param.raw_data();
    require(p.size() == grad.size(), errc::shape_mismatch, "adamw: gradient shape mismatch");
    for (float g : grad) {
        require(std::isfinite(g), errc::non_finite, "adamw: non-finite gradient");
    }
    if (state.m.empty()) {
        state.m.assign(p.size(), 0.0f);
        state.v.assign(p.size(), 0.0f);
    }
    require(state.m.size() == p.size() && state.v.size() == p.size(), errc::shape_mismatch,
            "adamw: optimizer state shape mismatch");

    state.step += 1;
    const double bc1 = 1.0 - std::pow(static_cast<double>(state.hyper.beta1), static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(static_cast<double>(state.hyper.beta2), static_cast<double>(state.step));
    const float lr = state.hyper.lr;
    const float b1 = state.hyper.beta1;
    const float b2 = state.hyper.beta2;
    const float eps = state.hyper.eps;
    const float decay = 1.0f - lr * state.hyper.weight_decay;

    for (size_t i = 0; i < p.size(); ++i) {
        const float g = grad[i];
        state.m[i] = b1 * state.m[i] + (1.0f - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0f - b2) * g * g;
        if (lr == 0.0f) {
            continue;  // the update and decay are exactly zero; skip the
                       // writes so parameters stay bit-identical
        }
        const float mhat = static_cast<float>(state.m[i] / bc1);
        const float vhat = static_cast<float>(state.v[i] / bc2);
        p[i] *= decay;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

}  // namespace icdit
