#include "introdistill/attacks.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include "introdistill/ops.hpp"

namespace introdistill {

void AttackBudget::validate() const {
  if (epsilon < 0.0) {
    throw std::invalid_argument("AttackBudget: epsilon must be >= 0");
  }
  if (steps > 0 && !(step_size > 0.0)) {
    throw std::invalid_argument("AttackBudget: step_size must be > 0");
  }
  if (!(clamp_lo < clamp_hi)) {
    throw std::invalid_argument("AttackBudget: clamp range is empty");
  }
}

NdArray project_linf(const NdArray& x_adv, const NdArray& x, double eps,
                     double lo, double hi) {
  if (!x_adv.same_shape(x)) {
    throw std::invalid_argument("project_linf: shape mismatch");
  }
  std::vector<double> out(x_adv.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v = x_adv[i];
    v = std::max(v, x[i] - eps);
    v = std::min(v, x[i] + eps);
    out[i] = std::clamp(v, lo, hi);
  }
  return NdArray(x.shape(), std::move(out));
}

Var attack_objective(Tape& tape, const BoundNet& bound, const Var& x_adv,
                     const std::vector<int>& y, AttackObjective objective,
                     const NdArray* natural_probs) {
  Var logits = forward(tape, bound, x_adv);
  if (objective == AttackObjective::CeHardLabel) {
    return sum_all(tape, cross_entropy(tape, logits, y));
  }
  if (natural_probs == nullptr) {
    throw std::invalid_argument(
        "attack_objective: kl-to-natural requires the natural reference");
  }
  Var q = softmax(tape, logits);
  Var p = tape.constant(*natural_probs);
  return sum_all(tape, kl_divergence(tape, q, p));
}

namespace {

inline double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

NdArray pgd(const Network& net, const NdArray& x, const std::vector<int>& y,
            const AttackBudget& budget, Rng* rng,
            const IterateObserver& observer) {
  budget.validate();
  if (x.rank() != 2 || x.dim(0) != y.size()) {
    throw std::invalid_argument("pgd: expected x[batch, d] matching labels");
  }

  NdArray natural_probs;
  if (budget.objective == AttackObjective::KlToNatural) {
    natural_probs = softmax_rows(infer(net, x), 1.0);
  }

  NdArray x_adv = x;
  if (budget.random_start) {
    if (rng == nullptr) {
      throw std::invalid_argument("pgd: random_start requires an rng");
    }
    std::vector<double> noisy(x.numel());
    for (std::size_t i = 0; i < noisy.size(); ++i) {
      noisy[i] = x[i] + rng->uniform(-budget.epsilon, budget.epsilon);
    }
    x_adv = project_linf(NdArray(x.shape(), std::move(noisy)), x,
                         budget.epsilon, budget.clamp_lo, budget.clamp_hi);
    if (observer) observer(x_adv);
  } else if (budget.steps == 0) {
    std::fprintf(stderr,
                 "pgd: steps=0 without random start is a no-op, returning x\n");
    return x_adv;
  }

  for (std::size_t t = 0; t < budget.steps; ++t) {
    Tape tape;
    Var adv = tape.leaf(x_adv, true);
    BoundNet bound = bind(tape, net, false);
    Var obj = attack_objective(
        tape, bound, adv, y, budget.objective,
        budget.objective == AttackObjective::KlToNatural ? &natural_probs
                                                         : nullptr);
    tape.backward(obj);
    const NdArray& g = adv.grad();
    std::vector<double> stepped(x.numel());
    for (std::size_t i = 0; i < stepped.size(); ++i) {
      stepped[i] = x_adv[i] + budget.step_size * sgn(g[i]);
    }
    x_adv = project_linf(NdArray(x.shape(), std::move(stepped)), x,
                         budget.epsilon, budget.clamp_lo, budget.clamp_hi);
    if (observer) observer(x_adv);
  }
  return x_adv;
}

NdArray fgsm(const Network& net, const NdArray& x, const std::vector<int>& y,
             const AttackBudget& budget) {
  AttackBudget single = budget;
  single.steps = 1;
  // With epsilon == 0 the projection collapses any step back onto x, so the
  // placeholder step size only keeps the budget valid.
  single.step_size = budget.epsilon > 0.0 ? budget.epsilon : 1.0;
  single.random_start = false;
  single.objective = AttackObjective::CeHardLabel;
  return pgd(net, x, y, single);
}

}  // namespace introdistill
