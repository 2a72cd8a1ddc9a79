#pragma once

#include <span>

#include "xva/layers.hpp"

namespace xva {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update of `p` from its current `grad`:
///
///   m <- b1 m + (1 - b1) g
///   v <- b2 v + (1 - b2) g^2
///   value <- value - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
///
/// with t the post-increment step count. The gradient is left untouched.
template <typename T>
void adam_step(Parameter<T>& p, double lr, const AdamConfig& config = {});

/// Step every parameter, then zero its gradient.
template <typename T>
void adam_step_all(std::span<Parameter<T>* const> params, double lr,
                   const AdamConfig& config = {});

}  // namespace xva
