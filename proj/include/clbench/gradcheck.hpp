#pragma once

#include <functional>
#include <string>
#include <vector>

#include "clbench/tape.hpp"

namespace clbench {

// Builds a scalar loss from the given parameter leaves. Called once on a
// recording tape for analytic gradients and repeatedly on non-recording
// tapes for the central-difference probe.
using TapedScalarFn = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  bool pass = false;
  std::string worst_coordinate;  // "p<i>[<j>]" of the worst offender
};

// Central differences (f(x+eps) - f(x-eps)) / (2 eps) per coordinate against
// the tape gradients; relative error |a-n| / max(|a|, |n|, 1e-8). A failed
// check is reported, not thrown.
GradCheckReport grad_check(const TapedScalarFn& f, const std::vector<Tensor>& point, double eps,
                           double tol);

}  // namespace clbench
