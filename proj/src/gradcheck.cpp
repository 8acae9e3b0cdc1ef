#include "clbench/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "clbench/errors.hpp"

namespace clbench {

namespace {

double eval_at(const TapedScalarFn& f, const std::vector<Tensor>& point) {
  Tape tape(false);
  std::vector<NodeId> ids;
  ids.reserve(point.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    ids.push_back(tape.param("p" + std::to_string(i), point[i]));
  }
  return tape.scalar_value(f(tape, ids));
}

}  // namespace

GradCheckReport grad_check(const TapedScalarFn& f, const std::vector<Tensor>& point, double eps,
                           double tol) {
  if (eps <= 0.0) throw ParamError("grad_check: eps must be > 0");

  Tape tape(true);
  std::vector<NodeId> ids;
  for (std::size_t i = 0; i < point.size(); ++i) {
    ids.push_back(tape.param("p" + std::to_string(i), point[i]));
  }
  GradientMap analytic = tape.backward(f(tape, ids));

  GradCheckReport report;
  std::vector<Tensor> probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const Tensor& a = analytic.at("p" + std::to_string(i));
    for (std::size_t j = 0; j < probe[i].numel(); ++j) {
      const double orig = probe[i].data[j];
      probe[i].data[j] = orig + eps;
      const double hi = eval_at(f, probe);
      probe[i].data[j] = orig - eps;
      const double lo = eval_at(f, probe);
      probe[i].data[j] = orig;

      const double numeric = (hi - lo) / (2.0 * eps);
      const double ana = a.data[j];
      const double rel =
          std::abs(ana - numeric) / std::max({std::abs(ana), std::abs(numeric), 1e-8});
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_coordinate = "p" + std::to_string(i) + "[" + std::to_string(j) + "]";
      }
    }
  }
  report.pass = report.max_rel_error <= tol;
  return report;
}

}  // namespace clbench
