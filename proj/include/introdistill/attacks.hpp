#pragma once

#include <functional>
#include <vector>

#include "introdistill/ndarray.hpp"
#include "introdistill/network.hpp"
#include "introdistill/rng.hpp"

namespace introdistill {

// What the inner maximization ascends: cross-entropy against the hard label,
// or KL from the model's own natural-input distribution (the TRADES
// objective).
enum class AttackObjective { CeHardLabel, KlToNatural };

struct AttackBudget {
  double epsilon = 8.0 / 255.0;   // L-inf radius, input units
  double step_size = 2.0 / 255.0; // input units
  std::size_t steps = 10;
  double clamp_lo = 0.0;
  double clamp_hi = 1.0;
  bool random_start = false;
  AttackObjective objective = AttackObjective::CeHardLabel;

  void validate() const;
};

// clamp(min(max(x_adv, x - eps), x + eps), lo, hi); idempotent.
NdArray project_linf(const NdArray& x_adv, const NdArray& x, double eps,
                     double lo, double hi);

// Called with each projected iterate (including the random start, when used).
using IterateObserver = std::function<void(const NdArray&)>;

// Multi-step signed-gradient ascent with projection after every step. The
// stopping criterion is the fixed iteration count. rng is only consulted for
// the random start. steps == 0 without random start returns x unchanged (a
// warning is printed).
NdArray pgd(const Network& net, const NdArray& x, const std::vector<int>& y,
            const AttackBudget& budget, Rng* rng = nullptr,
            const IterateObserver& observer = {});

// Single signed-gradient step of magnitude epsilon on the cross-entropy
// objective; bitwise equal to pgd with steps=1, step_size=epsilon and no
// random start.
NdArray fgsm(const Network& net, const NdArray& x, const std::vector<int>& y,
             const AttackBudget& budget);

// Attack objective as a scalar graph node (sum over the batch). For
// KlToNatural the caller must supply the model's natural-input probability
// rows; omitting them is an error.
Var attack_objective(Tape& tape, const BoundNet& bound, const Var& x_adv,
                     const std::vector<int>& y, AttackObjective objective,
                     const NdArray* natural_probs);

}  // namespace introdistill
