#pragma once

#include <string>
#include <vector>

#include "hgmn/tensor.hpp"

namespace hgmn {

/// Adam with decoupled weight decay. Moment buffers are positionally
/// aligned with the parameter list the state was built from.
struct AdamState {
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;
    std::vector<Array> m;
    std::vector<Array> v;

    AdamState() = default;
    AdamState(std::span<const Tensor> params, double lr, double wd);
};

/// One update: p <- p - lr*wd*p, then the bias-corrected Adam step;
/// gradients are zeroed afterwards. Parameter names are used only for
/// error messages.
void adam_step(std::span<Tensor> params, AdamState& state,
               std::span<const std::string> names = {});

}  // namespace hgmn
