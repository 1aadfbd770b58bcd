// SPDX-License-Identifier: Apache-2.0
#include "xtcdr/nn/adam.hpp"

#include <cmath>
#include <limits>

namespace xtcdr::nn {

OptimizerState OptimizerState::fresh(const ParamSet& params, AdamHyper hyper) {
    OptimizerState s;
    s.first_moment = params.zeros_like_trainable();
    s.second_moment = params.zeros_like_trainable();
    s.hyper = hyper;
    return s;
}

void adam_update(ParamSet& params, const ParamSet& grads, OptimizerState& state) {
    if (state.step >= (std::uint64_t{1} << 31)) fail(ErrorKind::Usage, "adam: step counter overflow");
    for (const auto& g : grads.entries()) {
        const auto& p = params.at(g.name);
        if (p.shape() != g.value.shape() || state.first_moment.at(g.name).shape() != p.shape())
            fail(ErrorKind::Shape, "adam: shape mismatch for " + g.name);
    }
    state.step += 1;
    const auto& h = state.hyper;
    const double t = double(state.step);
    const double c1 = 1.0 - std::pow(h.beta1, t);
    const double c2 = 1.0 - std::pow(h.beta2, t);
    const float b1 = float(h.beta1), b2 = float(h.beta2);
    for (const auto& g : grads.entries()) {
        auto& p = params.at(g.name);
        auto& m = state.first_moment.at(g.name);
        auto& v = state.second_moment.at(g.name);
        for (std::size_t k = 0; k < p.size(); ++k) {
            const float gk = g.value[k];
            m[k] = b1 * m[k] + (1.0f - b1) * gk;
            v[k] = b2 * v[k] + (1.0f - b2) * gk * gk;
            const double mhat = double(m[k]) / c1;
            const double vhat = double(v[k]) / c2;
            p[k] = float(double(p[k]) - h.lr * mhat / (std::sqrt(vhat) + h.eps));
        }
    }
}

std::pair<ParamSet, OptimizerState> adam_step(ParamSet params, const ParamSet& grads, OptimizerState state) {
    adam_update(params, grads, state);
    return {std::move(params), std::move(state)};
}

}  // namespace xtcdr::nn
