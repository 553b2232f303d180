#pragma once

#include "mcl/error.hpp"
#include "mcl/nn.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace mcl {

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    std::uint64_t t = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

/// Bias-corrected ADAM with decoupled weight decay: each trainable value first
/// shrinks by lr * weight_decay * value, then takes the ADAM step.
inline void adam_step(std::span<ParamSlot> params, const Gradients& grads, AdamState& state) {
    if (grads.size() != params.size()) throw Error(ErrorKind::shape, "gradient count does not match parameter count");
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.value.size(), 0.0);
            state.v.emplace_back(p.value.size(), 0.0);
        }
    }
    if (state.m.size() != params.size()) throw Error(ErrorKind::shape, "optimizer state does not match parameters");
    ++state.t;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (!params[p].trainable) continue;
        auto value = params[p].value;
        const auto& g = grads[p];
        auto& m = state.m[p];
        auto& v = state.v[p];
        if (g.size() != value.size() || m.size() != value.size())
            throw Error(ErrorKind::shape, "gradient shape mismatch for " + params[p].id);
        for (std::size_t i = 0; i < value.size(); ++i) {
            if (state.weight_decay != 0.0) value[i] -= state.lr * state.weight_decay * value[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            value[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
    }
}

}  // namespace mcl
