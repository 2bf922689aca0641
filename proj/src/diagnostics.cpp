#include "introdistill/diagnostics.hpp"

#include <stdexcept>

#include "introdistill/ops.hpp"

namespace introdistill {

ReliabilityPartition partition_from_logits(const NdArray& nat_logits,
                                           const NdArray& adv_logits,
                                           const std::vector<int>& y) {
  if (!nat_logits.same_shape(adv_logits) || nat_logits.dim(0) != y.size()) {
    throw std::invalid_argument("partition: shape mismatch");
  }
  const std::vector<int> nat_pred = argmax_rows(nat_logits);
  const std::vector<int> adv_pred = argmax_rows(adv_logits);
  ReliabilityPartition part;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const bool nat_ok = nat_pred[i] == y[i];
    const bool adv_ok = adv_pred[i] == y[i];
    if (nat_ok && adv_ok) ++part.n_case1;
    else if (nat_ok) ++part.n_case2;
    else if (!adv_ok) ++part.n_case3;
    else ++part.n_case4;
  }
  return part;
}

ReliabilityPartition partition_batch(const Network& teacher, const NdArray& x,
                                     const NdArray& x_adv,
                                     const std::vector<int>& y) {
  if (!x.same_shape(x_adv)) {
    throw std::invalid_argument("partition_batch: shape mismatch");
  }
  return partition_from_logits(infer(teacher, x), infer(teacher, x_adv), y);
}

std::vector<double> teacher_adv_accuracy_curve(
    const Network& teacher, const std::vector<Network>& snapshots,
    const NdArray& x, const std::vector<int>& y, const AttackBudget& budget) {
  if (snapshots.empty()) {
    throw std::invalid_argument("teacher_adv_accuracy_curve: no snapshots");
  }
  std::vector<double> curve;
  curve.reserve(snapshots.size());
  for (const Network& student : snapshots) {
    const NdArray x_adv = pgd(student, x, y, budget);
    curve.push_back(accuracy(infer(teacher, x_adv), y));
  }
  return curve;
}

double combined_guidance_accuracy(const Network& teacher,
                                  const Network& student, const NdArray& x_adv,
                                  const std::vector<int>& y,
                                  const std::vector<double>& alpha) {
  if (alpha.size() != y.size() || x_adv.dim(0) != y.size()) {
    throw std::invalid_argument("combined_guidance_accuracy: shape mismatch");
  }
  const NdArray t_probs = softmax_rows(infer(teacher, x_adv), 1.0);
  const NdArray s_probs = softmax_rows(infer(student, x_adv), 1.0);
  const std::size_t c = t_probs.dim(1);
  std::vector<double> mixed(t_probs.numel());
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      mixed[i * c + k] = alpha[i] * t_probs[i * c + k] +
                         (1.0 - alpha[i]) * s_probs[i * c + k];
    }
  }
  return accuracy(NdArray({y.size(), c}, std::move(mixed)), y);
}

}  // namespace introdistill
