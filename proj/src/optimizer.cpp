#include "matsim/optimizer.hpp"

#include <cmath>

#include "matsim/errors.hpp"

namespace matsim {

OptimizerState OptimizerState::for_size(std::size_t n) {
    OptimizerState s;
    const auto size = static_cast<Index>(n);
    s.first_moment = Vector::Zero(size);
    s.second_moment = Vector::Zero(size);
    s.max_second_moment = Vector::Zero(size);
    return s;
}

void optimizer_step(OptimizerState& state, Vector& params, const Vector& grads, double learning_rate) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
        params.size() != state.second_moment.size() || params.size() != state.max_second_moment.size()) {
        throw ValidationError("optimizer_step: shape mismatch");
    }
    if (!grads.allFinite()) throw ComputeError("optimizer_step: non-finite gradient");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bias1 = 1.0 - std::pow(state.beta1, t);
    const double bias2 = 1.0 - std::pow(state.beta2, t);
    state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads;
    state.second_moment = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads.cwiseProduct(grads);
    state.max_second_moment = state.max_second_moment.cwiseMax(state.second_moment);
    const double step_size = learning_rate / bias1;
    const double root_bias2 = std::sqrt(bias2);
    for (Index i = 0; i < params.size(); ++i) {
        const double denom = std::sqrt(state.max_second_moment(i)) / root_bias2 + state.epsilon;
        params(i) -= step_size * state.first_moment(i) / denom;
    }
}

}  // namespace matsim
