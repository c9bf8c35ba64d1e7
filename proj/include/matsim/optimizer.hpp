#pragma once

#include <cstddef>

#include "matsim/types.hpp"

namespace matsim {

/// Adam with the max-of-second-moments correction (AMSGrad), bias-corrected.
struct OptimizerState {
    Vector first_moment;
    Vector second_moment;
    Vector max_second_moment;
    std::size_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static OptimizerState for_size(std::size_t n);
};

/// One update of `params` in place. Throws on shape mismatch or non-finite gradients.
void optimizer_step(OptimizerState& state, Vector& params, const Vector& grads, double learning_rate);

}  // namespace matsim
