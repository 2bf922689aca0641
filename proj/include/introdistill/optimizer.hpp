#pragma once

#include <cstddef>
#include <vector>

#include "introdistill/network.hpp"

namespace introdistill {

// Piecewise-constant learning rate: divided by 1/decay at each milestone
// epoch (inclusive).
struct LrSchedule {
  double base_lr = 0.1;
  std::vector<std::size_t> milestones;
  double decay = 0.1;

  void validate() const;
  double at_epoch(std::size_t epoch) const;
};

// SGD with momentum and decoupled-from-bias weight decay:
//   v <- momentum * v + (grad + wd * param);  param <- param - lr * v
// Bias tensors (rank-1) are excluded from weight decay.
class SgdOptimizer {
 public:
  SgdOptimizer(const Network& net, double momentum, double weight_decay);

  void step(Network& net, const std::vector<NdArray>& grads, double lr);

  double momentum() const { return momentum_; }
  double weight_decay() const { return weight_decay_; }

 private:
  double momentum_;
  double weight_decay_;
  std::vector<NdArray> velocity_;
};

}  // namespace introdistill
