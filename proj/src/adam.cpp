#include "hgmn/adam.hpp"

namespace hgmn {

AdamState::AdamState(std::span<const Tensor> params, double lr, double wd)
    : learning_rate(lr), weight_decay(wd) {
    m.reserve(params.size());
    v.reserve(params.size());
    for (const Tensor& p : params) {
        m.push_back(Array::Zero(p.numel()));
        v.push_back(Array::Zero(p.numel()));
    }
}

void adam_step(std::span<Tensor> params, AdamState& state,
               std::span<const std::string> names) {
    if (params.size() != state.m.size())
        throw ContractError("adam_step: state tracks " + std::to_string(state.m.size()) +
                            " parameters, got " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].requires_grad() || !params[i].has_grad()) {
            const std::string name =
                i < names.size() ? names[i] : ("parameter #" + std::to_string(i));
            throw ContractError("adam_step: missing gradient for " + name);
        }
        if (state.m[i].size() != params[i].numel())
            throw ContractError("adam_step: moment shape mismatch at parameter #" +
                                std::to_string(i));
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Array& p = params[i].value_flat();
        const Array g = params[i].grad_flat();
        p -= state.learning_rate * state.weight_decay * p;
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        const Array m_hat = state.m[i] / bc1;
        const Array v_hat = state.v[i] / bc2;
        p -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        params[i].zero_grad();
    }
}

}  // namespace hgmn
