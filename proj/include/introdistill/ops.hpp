#pragma once

#include <cstddef>
#include <vector>

#include "introdistill/tape.hpp"

namespace introdistill {

// Probabilities are floored at this value inside every log so that one-hot
// rows stay finite (0*log 0 := 0).
inline constexpr double kProbFloor = 1e-12;

// Elementwise; shapes must match.
Var add(Tape& tape, const Var& a, const Var& b);
Var sub(Tape& tape, const Var& a, const Var& b);
Var mul(Tape& tape, const Var& a, const Var& b);
Var scale(Tape& tape, const Var& a, double c);
Var add_const(Tape& tape, const Var& a, double c);

// x:[m,n] + bias:[n] broadcast over rows.
Var add_bias(Tape& tape, const Var& x, const Var& bias);

// a:[m,k] * b:[k,n] -> [m,n].
Var matmul(Tape& tape, const Var& a, const Var& b);

Var relu(Tape& tape, const Var& x);

// x:[B,C,H,W], weight:[OC,IC,KH,KW], bias:[OC]; zero padding.
Var conv2d(Tape& tape, const Var& x, const Var& weight, const Var& bias,
           std::size_t stride, std::size_t pad);

Var reshape(Tape& tape, const Var& x, Shape shape);

Var sum_all(Tape& tape, const Var& x);
Var mean_all(Tape& tape, const Var& x);

// x:[b] -> scalar (1/b) * sum_i weights[i] * x[i]; weights are constants.
Var weighted_mean(Tape& tape, const Var& x, const std::vector<double>& weights);

// Tempered softmax S(x|tau) over rows of logits:[b,c], via max-shifted
// exponentials. tau must be > 0.
Var softmax_temperature(Tape& tape, const Var& logits, double tau);
inline Var softmax(Tape& tape, const Var& logits) {
  return softmax_temperature(tape, logits, 1.0);
}

// Per-row -log softmax(logits)[label], via log-sum-exp.
Var cross_entropy(Tape& tape, const Var& logits,
                  const std::vector<int>& labels);

// Per-row KL(p||q) = sum_k p_k log(p_k/q_k). Both arguments are probability
// rows (validated within 1e-6); differentiable through both.
Var kl_divergence(Tape& tape, const Var& q, const Var& p);

// --- plain-array helpers (no tape) ---

NdArray softmax_rows(const NdArray& logits, double tau = 1.0);
std::vector<int> argmax_rows(const NdArray& rows);
double accuracy(const NdArray& logits, const std::vector<int>& labels);

}  // namespace introdistill
