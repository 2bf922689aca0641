#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "introdistill/network.hpp"
#include "introdistill/tape.hpp"

namespace introdistill {

enum class Method { AT, TRADES, ARD, AKD2, IadI, IadII };

std::string method_name(Method m);
Method method_from_name(const std::string& name);
bool method_needs_teacher(Method m);
bool method_needs_std_teacher(Method m);
bool method_uses_guidance(Method m);  // IAD variants only

enum class GammaMode { OneMinusAlpha, Constant };
enum class TeacherWeight { ConstantOne, Alpha };  // the -Down variant uses Alpha

// Method selector plus every loss weight. lambda drives the ARD/IAD-I split
// between natural CE and distillation; lambda1..3 weight the AKD2/IAD-II
// terms; beta sharpens the teacher trust weight; gamma scales the
// self-introspection term.
struct DistillSpec {
  Method method = Method::IadI;
  double tau = 1.0;
  double beta = 0.1;
  GammaMode gamma_mode = GammaMode::OneMinusAlpha;
  double gamma_constant = 1.0;
  double lambda = 0.0;
  double lambda1 = 0.25;
  double lambda2 = 0.5;
  double lambda3 = 0.25;
  double trades_weight = 6.0;
  std::size_t warmup_epochs = 0;
  TeacherWeight iad_i_teacher_weight = TeacherWeight::ConstantOne;
  bool iad_ii_nested = false;  // literal nested grouping, for comparison

  void validate() const;
};

// Per-example trust weights. During warm-up alpha is forced to 1 (and gamma
// follows from the gamma mode applied to that alpha).
struct GuidanceWeights {
  std::vector<double> alpha;
  std::vector<double> gamma;
  bool warmup_active = false;
};

// alpha_i = (teacher probability of the true label on the adversarial
// input)^beta, in [0,1]; treated as a constant downstream.
std::vector<double> alpha_weights(const NdArray& teacher_probs_adv,
                                  const std::vector<int>& y, double beta);

std::vector<double> gamma_weights(const std::vector<double>& alpha,
                                  GammaMode mode, double constant);

// --- the six objectives (batch means; all return a scalar node) ---

Var at_loss(Tape& tape, const BoundNet& student, const NdArray& x_adv,
            const std::vector<int>& y);

Var trades_loss(Tape& tape, const BoundNet& student, const NdArray& x,
                const NdArray& x_adv, const std::vector<int>& y,
                const DistillSpec& spec);

Var ard_loss(Tape& tape, const BoundNet& student, const BoundNet& teacher,
             const NdArray& x, const NdArray& x_adv, const std::vector<int>& y,
             const DistillSpec& spec);

Var akd2_loss(Tape& tape, const BoundNet& student, const BoundNet& teacher_at,
              const BoundNet& teacher_st, const NdArray& x_adv,
              const std::vector<int>& y, const DistillSpec& spec);

Var iad_i_loss(Tape& tape, const BoundNet& student, const BoundNet& teacher,
               const NdArray& x, const NdArray& x_adv,
               const std::vector<int>& y, const GuidanceWeights& weights,
               const DistillSpec& spec);

Var iad_ii_loss(Tape& tape, const BoundNet& student,
                const BoundNet& teacher_at, const BoundNet& teacher_st,
                const NdArray& x, const NdArray& x_adv,
                const std::vector<int>& y, const GuidanceWeights& weights,
                const DistillSpec& spec);

// Loss evaluator configured for an epoch: applies the warm-up gate and
// dispatches on the method.
struct ConfiguredLoss {
  DistillSpec spec;
  bool warmup_active = false;

  GuidanceWeights weights(const NdArray& teacher_probs_adv,
                          const std::vector<int>& y) const;

  Var evaluate(Tape& tape, const BoundNet& student,
               const BoundNet* teacher_at, const BoundNet* teacher_st,
               const NdArray& x, const NdArray& x_adv,
               const std::vector<int>& y, const GuidanceWeights& w) const;
};

ConfiguredLoss select_loss(const DistillSpec& spec, std::size_t epoch);

}  // namespace introdistill
