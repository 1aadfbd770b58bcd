// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <utility>

#include "xtcdr/nn/network.hpp"

namespace xtcdr::nn {

struct AdamHyper {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    bool operator==(const AdamHyper&) const = default;
};

/// First/second moments keyed like the trainable entries of a ParamSet.
struct OptimizerState {
    ParamSet first_moment;
    ParamSet second_moment;
    std::uint64_t step = 0;
    AdamHyper hyper;

    static OptimizerState fresh(const ParamSet& params, AdamHyper hyper = {});
    bool operator==(const OptimizerState&) const = default;
};

/// In-place bias-corrected Adam update of every trainable entry present in
/// `grads`. Non-trainable entries (batchnorm running statistics) are never
/// touched.
void adam_update(ParamSet& params, const ParamSet& grads, OptimizerState& state);

std::pair<ParamSet, OptimizerState> adam_step(ParamSet params, const ParamSet& grads, OptimizerState state);

}  // namespace xtcdr::nn
