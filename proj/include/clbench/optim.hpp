#pragma once

#include <string>
#include <utility>
#include <vector>

#include "clbench/tape.hpp"

namespace clbench {

// Named mutable views of the parameters an optimizer updates.
using ParamRefs = std::vector<std::pair<std::string, Tensor*>>;

// v <- momentum * v + g; theta <- theta - lr * v. Velocity entries are
// created as zeros on first use. With momentum 0 this is vanilla SGD.
void sgd_momentum_step(const ParamRefs& params, const GradientMap& grads, double lr,
                       double momentum, GradientMap& velocity);

}  // namespace clbench
