#include "introdistill/optimizer.hpp"

#include <stdexcept>

namespace introdistill {

void LrSchedule::validate() const {
  if (!(base_lr > 0.0)) {
    throw std::invalid_argument("LrSchedule: base_lr must be > 0");
  }
  if (!(decay > 0.0 && decay <= 1.0)) {
    throw std::invalid_argument("LrSchedule: decay must be in (0,1]");
  }
}

double LrSchedule::at_epoch(std::size_t epoch) const {
  validate();
  double lr = base_lr;
  for (std::size_t m : milestones) {
    if (epoch >= m) lr *= decay;
  }
  return lr;
}

SgdOptimizer::SgdOptimizer(const Network& net, double momentum,
                           double weight_decay)
    : momentum_(momentum), weight_decay_(weight_decay) {
  for (const NdArray& p : net.params()) {
    velocity_.push_back(NdArray::zeros(p.shape()));
  }
}

void SgdOptimizer::step(Network& net, const std::vector<NdArray>& grads,
                        double lr) {
  std::vector<NdArray>& params = net.params();
  if (grads.size() != params.size() || params.size() != velocity_.size()) {
    throw std::invalid_argument("SgdOptimizer::step: parameter count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    NdArray& p = params[i];
    const NdArray& g = grads[i];
    NdArray& v = velocity_[i];
    if (!p.same_shape(g)) {
      throw std::invalid_argument("SgdOptimizer::step: gradient shape " +
                                  shape_str(g.shape()) +
                                  " does not match parameter " +
                                  shape_str(p.shape()));
    }
    const double wd = net.bias_mask()[i] ? 0.0 : weight_decay_;
    for (std::size_t j = 0; j < p.numel(); ++j) {
      v[j] = momentum_ * v[j] + (g[j] + wd * p[j]);
      p[j] -= lr * v[j];
    }
  }
}

}  // namespace introdistill
