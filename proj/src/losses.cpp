#include "introdistill/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "introdistill/ops.hpp"

namespace introdistill {

std::string method_name(Method m) {
  switch (m) {
    case Method::AT: return "at";
    case Method::TRADES: return "trades";
    case Method::ARD: return "ard";
    case Method::AKD2: return "akd2";
    case Method::IadI: return "iad-i";
    case Method::IadII: return "iad-ii";
  }
  throw std::logic_error("method_name: bad enum");
}

Method method_from_name(const std::string& name) {
  if (name == "at") return Method::AT;
  if (name == "trades") return Method::TRADES;
  if (name == "ard") return Method::ARD;
  if (name == "akd2") return Method::AKD2;
  if (name == "iad-i") return Method::IadI;
  if (name == "iad-ii") return Method::IadII;
  throw std::invalid_argument("unknown method '" + name + "'");
}

bool method_needs_teacher(Method m) {
  return m == Method::ARD || m == Method::AKD2 || m == Method::IadI ||
         m == Method::IadII;
}

bool method_needs_std_teacher(Method m) {
  return m == Method::AKD2 || m == Method::IadII;
}

bool method_uses_guidance(Method m) {
  return m == Method::IadI || m == Method::IadII;
}

void DistillSpec::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("DistillSpec: tau must be > 0");
  if (beta < 0.0) throw std::invalid_argument("DistillSpec: beta must be >= 0");
  for (double l : {lambda, lambda1, lambda2, lambda3}) {
    if (l < 0.0 || l > 1.0) {
      throw std::invalid_argument("DistillSpec: lambda weights must be in [0,1]");
    }
  }
  if (trades_weight < 0.0) {
    throw std::invalid_argument("DistillSpec: trades_weight must be >= 0");
  }
  if (gamma_mode == GammaMode::Constant && gamma_constant < 0.0) {
    throw std::invalid_argument("DistillSpec: constant gamma must be >= 0");
  }
}

std::vector<double> alpha_weights(const NdArray& teacher_probs_adv,
                                  const std::vector<int>& y, double beta) {
  if (beta < 0.0) throw std::invalid_argument("alpha_weights: beta must be >= 0");
  if (teacher_probs_adv.rank() != 2 || teacher_probs_adv.dim(0) != y.size()) {
    throw std::invalid_argument("alpha_weights: probs/labels mismatch");
  }
  const std::size_t b = teacher_probs_adv.dim(0), c = teacher_probs_adv.dim(1);
  std::vector<double> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    if (y[i] < 0 || static_cast<std::size_t>(y[i]) >= c) {
      throw std::out_of_range("alpha_weights: label out of range");
    }
    out[i] = std::pow(teacher_probs_adv[i * c + static_cast<std::size_t>(y[i])],
                      beta);
  }
  return out;
}

std::vector<double> gamma_weights(const std::vector<double>& alpha,
                                  GammaMode mode, double constant) {
  if (mode == GammaMode::Constant && constant < 0.0) {
    throw std::invalid_argument("gamma_weights: negative constant");
  }
  std::vector<double> out(alpha.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    out[i] = mode == GammaMode::OneMinusAlpha ? 1.0 - alpha[i] : constant;
  }
  return out;
}

namespace {

// Tempered probability rows of a network on a fixed input. `detached` cuts
// gradient flow (teacher branches).
Var net_probs(Tape& tape, const BoundNet& net, const NdArray& x, double tau,
              bool detached) {
  Var logits = forward(tape, net, tape.constant(x));
  if (detached) logits = detach(tape, logits);
  return softmax_temperature(tape, logits, tau);
}

void check_weights(const GuidanceWeights& w, std::size_t batch,
                   const char* op) {
  if (w.alpha.size() != batch || w.gamma.size() != batch) {
    throw std::invalid_argument(std::string(op) +
                                ": guidance weight count mismatch");
  }
}

}  // namespace

Var at_loss(Tape& tape, const BoundNet& student, const NdArray& x_adv,
            const std::vector<int>& y) {
  Var logits = forward(tape, student, tape.constant(x_adv));
  return mean_all(tape, cross_entropy(tape, logits, y));
}

Var trades_loss(Tape& tape, const BoundNet& student, const NdArray& x,
                const NdArray& x_adv, const std::vector<int>& y,
                const DistillSpec& spec) {
  spec.validate();
  Var nat_logits = forward(tape, student, tape.constant(x));
  Var ce = mean_all(tape, cross_entropy(tape, nat_logits, y));
  if (spec.trades_weight == 0.0) return ce;
  Var adv_logits = forward(tape, student, tape.constant(x_adv));
  Var q = softmax_temperature(tape, adv_logits, spec.tau);
  Var p = softmax_temperature(tape, nat_logits, spec.tau);
  Var kl = mean_all(tape, kl_divergence(tape, q, p));
  return add(tape, ce,
             scale(tape, kl, spec.trades_weight * spec.tau * spec.tau));
}

namespace {

// Shared core of ARD and IAD-I. The IAD-I bracket adds the introspection term
// before the (1-lambda)*tau^2 scaling; with unit teacher weights and zero
// gamma the two paths produce bitwise-identical values.
Var ard_family_loss(Tape& tape, const BoundNet& student,
                    const BoundNet& teacher, const NdArray& x,
                    const NdArray& x_adv, const std::vector<int>& y,
                    const DistillSpec& spec, const GuidanceWeights* weights) {
  spec.validate();
  if (spec.lambda == 1.0) {
    Var nat_logits = forward(tape, student, tape.constant(x));
    return mean_all(tape, cross_entropy(tape, nat_logits, y));
  }

  Var adv_logits = forward(tape, student, tape.constant(x_adv));
  Var s_adv_probs = softmax_temperature(tape, adv_logits, spec.tau);
  Var t_probs = net_probs(tape, teacher, x, spec.tau, /*detached=*/true);
  Var kl_rows = kl_divergence(tape, s_adv_probs, t_probs);

  Var bracket;
  Var nat_logits;
  bool have_nat = false;
  if (weights == nullptr) {
    bracket = mean_all(tape, kl_rows);
  } else {
    check_weights(*weights, y.size(), "iad_i_loss");
    std::vector<double> teacher_w(y.size(), 1.0);
    if (spec.iad_i_teacher_weight == TeacherWeight::Alpha) {
      teacher_w = weights->alpha;
    }
    Var t_term = weighted_mean(tape, kl_rows, teacher_w);
    // Introspection is always tempered at 1 regardless of spec.tau.
    nat_logits = forward(tape, student, tape.constant(x));
    have_nat = true;
    Var s_adv_1 = spec.tau == 1.0 ? s_adv_probs
                                  : softmax_temperature(tape, adv_logits, 1.0);
    Var s_nat_1 = softmax_temperature(tape, nat_logits, 1.0);
    Var self_rows = kl_divergence(tape, s_adv_1, s_nat_1);
    Var self_term = weighted_mean(tape, self_rows, weights->gamma);
    bracket = add(tape, t_term, self_term);
  }

  Var distill_term =
      scale(tape, bracket, (1.0 - spec.lambda) * spec.tau * spec.tau);
  if (spec.lambda == 0.0) return distill_term;
  if (!have_nat) nat_logits = forward(tape, student, tape.constant(x));
  Var ce = mean_all(tape, cross_entropy(tape, nat_logits, y));
  return add(tape, scale(tape, ce, spec.lambda), distill_term);
}

// Shared core of AKD2 and IAD-II (sibling-weight grouping). `alpha` weights
// the adversarial-teacher KL when present; the introspection term is appended
// after the three base terms.
Var akd2_family_loss(Tape& tape, const BoundNet& student,
                     const BoundNet& teacher_at, const BoundNet& teacher_st,
                     const NdArray& x, const NdArray& x_adv,
                     const std::vector<int>& y, const DistillSpec& spec,
                     const GuidanceWeights* weights) {
  spec.validate();
  const double tau2 = spec.tau * spec.tau;
  Var adv_logits = forward(tape, student, tape.constant(x_adv));
  Var ce = mean_all(tape, cross_entropy(tape, adv_logits, y));
  Var s_adv_probs = softmax_temperature(tape, adv_logits, spec.tau);
  Var t_at_probs = net_probs(tape, teacher_at, x_adv, spec.tau, true);
  Var t_st_probs = net_probs(tape, teacher_st, x_adv, spec.tau, true);
  Var kl_at_rows = kl_divergence(tape, s_adv_probs, t_at_probs);
  Var kl_st_rows = kl_divergence(tape, s_adv_probs, t_st_probs);

  if (weights == nullptr) {
    Var core = add(tape,
                   add(tape, scale(tape, ce, spec.lambda1),
                       scale(tape, mean_all(tape, kl_at_rows),
                             spec.lambda2 * tau2)),
                   scale(tape, mean_all(tape, kl_st_rows),
                         spec.lambda3 * tau2));
    return core;
  }

  check_weights(*weights, y.size(), "iad_ii_loss");
  Var kl_at_w = weighted_mean(tape, kl_at_rows, weights->alpha);
  Var nat_logits = forward(tape, student, tape.constant(x));
  Var s_adv_1 = spec.tau == 1.0 ? s_adv_probs
                                : softmax_temperature(tape, adv_logits, 1.0);
  Var s_nat_1 = softmax_temperature(tape, nat_logits, 1.0);
  Var self_rows = kl_divergence(tape, s_adv_1, s_nat_1);
  Var self_term = weighted_mean(tape, self_rows, weights->gamma);

  if (spec.iad_ii_nested) {
    // Literal grouping: lambda1*CE + lambda2*tau^2*(alpha*KL_at
    //   + lambda3*tau^2*KL_st + gamma*KL_self).
    Var bracket = add(tape,
                      add(tape, kl_at_w,
                          scale(tape, mean_all(tape, kl_st_rows),
                                spec.lambda3 * tau2)),
                      self_term);
    return add(tape, scale(tape, ce, spec.lambda1),
               scale(tape, bracket, spec.lambda2 * tau2));
  }

  Var core = add(tape,
                 add(tape, scale(tape, ce, spec.lambda1),
                     scale(tape, kl_at_w, spec.lambda2 * tau2)),
                 scale(tape, mean_all(tape, kl_st_rows),
                       spec.lambda3 * tau2));
  return add(tape, core, scale(tape, self_term, tau2));
}

}  // namespace

Var ard_loss(Tape& tape, const BoundNet& student, const BoundNet& teacher,
             const NdArray& x, const NdArray& x_adv, const std::vector<int>& y,
             const DistillSpec& spec) {
  return ard_family_loss(tape, student, teacher, x, x_adv, y, spec, nullptr);
}

Var iad_i_loss(Tape& tape, const BoundNet& student, const BoundNet& teacher,
               const NdArray& x, const NdArray& x_adv,
               const std::vector<int>& y, const GuidanceWeights& weights,
               const DistillSpec& spec) {
  return ard_family_loss(tape, student, teacher, x, x_adv, y, spec, &weights);
}

Var akd2_loss(Tape& tape, const BoundNet& student, const BoundNet& teacher_at,
              const BoundNet& teacher_st, const NdArray& x_adv,
              const std::vector<int>& y, const DistillSpec& spec) {
  if (teacher_st.net == nullptr) {
    throw std::invalid_argument("akd2_loss: standard teacher missing");
  }
  return akd2_family_loss(tape, student, teacher_at, teacher_st,
                          /*x=*/x_adv, x_adv, y, spec, nullptr);
}

Var iad_ii_loss(Tape& tape, const BoundNet& student,
                const BoundNet& teacher_at, const BoundNet& teacher_st,
                const NdArray& x, const NdArray& x_adv,
                const std::vector<int>& y, const GuidanceWeights& weights,
                const DistillSpec& spec) {
  if (teacher_st.net == nullptr) {
    throw std::invalid_argument("iad_ii_loss: standard teacher missing");
  }
  return akd2_family_loss(tape, student, teacher_at, teacher_st, x, x_adv, y,
                          spec, &weights);
}

GuidanceWeights ConfiguredLoss::weights(const NdArray& teacher_probs_adv,
                                        const std::vector<int>& y) const {
  GuidanceWeights w;
  w.warmup_active = warmup_active;
  if (warmup_active) {
    w.alpha.assign(y.size(), 1.0);
  } else {
    w.alpha = alpha_weights(teacher_probs_adv, y, spec.beta);
  }
  w.gamma = gamma_weights(w.alpha, spec.gamma_mode, spec.gamma_constant);
  return w;
}

Var ConfiguredLoss::evaluate(Tape& tape, const BoundNet& student,
                             const BoundNet* teacher_at,
                             const BoundNet* teacher_st, const NdArray& x,
                             const NdArray& x_adv, const std::vector<int>& y,
                             const GuidanceWeights& w) const {
  if (method_needs_teacher(spec.method) &&
      (teacher_at == nullptr || teacher_at->net == nullptr)) {
    throw std::invalid_argument(method_name(spec.method) +
                                " requires an adversarially trained teacher");
  }
  if (method_needs_std_teacher(spec.method) &&
      (teacher_st == nullptr || teacher_st->net == nullptr)) {
    throw std::invalid_argument(method_name(spec.method) +
                                " requires a standard teacher");
  }
  switch (spec.method) {
    case Method::AT:
      return at_loss(tape, student, x_adv, y);
    case Method::TRADES:
      return trades_loss(tape, student, x, x_adv, y, spec);
    case Method::ARD:
      return ard_loss(tape, student, *teacher_at, x, x_adv, y, spec);
    case Method::AKD2:
      return akd2_loss(tape, student, *teacher_at, *teacher_st, x_adv, y,
                       spec);
    case Method::IadI:
      return iad_i_loss(tape, student, *teacher_at, x, x_adv, y, w, spec);
    case Method::IadII:
      return iad_ii_loss(tape, student, *teacher_at, *teacher_st, x, x_adv, y,
                         w, spec);
  }
  throw std::invalid_argument("select_loss: unknown method");
}

ConfiguredLoss select_loss(const DistillSpec& spec, std::size_t epoch) {
  spec.validate();
  ConfiguredLoss cl;
  cl.spec = spec;
  cl.warmup_active =
      method_uses_guidance(spec.method) && epoch < spec.warmup_epochs;
  return cl;
}

}  // namespace introdistill
