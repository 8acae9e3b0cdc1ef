#include "clbench/optim.hpp"

#include "clbench/errors.hpp"

namespace clbench {

void sgd_momentum_step(const ParamRefs& params, const GradientMap& grads, double lr,
                       double momentum, GradientMap& velocity) {
  for (const auto& [name, theta] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) throw UsageError("sgd_momentum_step: no gradient for '" + name + "'");
    const Tensor& g = git->second;
    require_same_shape(*theta, g, "sgd_momentum_step gradient of '" + name + "'");

    auto vit = velocity.find(name);
    if (vit == velocity.end()) {
      vit = velocity.emplace(name, Tensor::zeros(theta->shape)).first;
    }
    Tensor& v = vit->second;
    require_same_shape(*theta, v, "sgd_momentum_step velocity of '" + name + "'");

    for (std::size_t i = 0; i < theta->numel(); ++i) {
      v.data[i] = momentum * v.data[i] + g.data[i];
      theta->data[i] -= lr * v.data[i];
    }
  }
}

}  // namespace clbench
