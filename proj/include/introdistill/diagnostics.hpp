#pragma once

#include <cstddef>
#include <vector>

#include "introdistill/attacks.hpp"
#include "introdistill/network.hpp"

namespace introdistill {

// Per-batch counts of the teacher-reliability cases, by top-1 prediction:
//   case 1: right on the natural input and on the adversarial one
//   case 2: right on the natural input, wrong on the adversarial one
//   case 3: wrong on both
//   case 4: wrong on the natural input, right on the adversarial one
//           (tracked to verify rarity; never assumed empty)
struct ReliabilityPartition {
  std::size_t n_case1 = 0;
  std::size_t n_case2 = 0;
  std::size_t n_case3 = 0;
  std::size_t n_case4 = 0;

  std::size_t total() const { return n_case1 + n_case2 + n_case3 + n_case4; }
  ReliabilityPartition& operator+=(const ReliabilityPartition& o) {
    n_case1 += o.n_case1;
    n_case2 += o.n_case2;
    n_case3 += o.n_case3;
    n_case4 += o.n_case4;
    return *this;
  }
  bool operator==(const ReliabilityPartition&) const = default;
};

ReliabilityPartition partition_batch(const Network& teacher, const NdArray& x,
                                     const NdArray& x_adv,
                                     const std::vector<int>& y);

// Same classification from precomputed teacher logits (used by the training
// loop, which already has them).
ReliabilityPartition partition_from_logits(const NdArray& nat_logits,
                                           const NdArray& adv_logits,
                                           const std::vector<int>& y);

// For each student snapshot: generate adversarial data against that student,
// then measure the teacher's accuracy on it.
std::vector<double> teacher_adv_accuracy_curve(
    const Network& teacher, const std::vector<Network>& snapshots,
    const NdArray& x, const std::vector<int>& y, const AttackBudget& budget);

// Accuracy of argmax(alpha * teacher_probs + (1-alpha) * student_probs),
// per-example alpha.
double combined_guidance_accuracy(const Network& teacher,
                                  const Network& student, const NdArray& x_adv,
                                  const std::vector<int>& y,
                                  const std::vector<double>& alpha);

}  // namespace introdistill
