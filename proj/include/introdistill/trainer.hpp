#pragma once

#include <map>
#include <string>
#include <vector>

#include "introdistill/attacks.hpp"
#include "introdistill/dataset.hpp"
#include "introdistill/losses.hpp"
#include "introdistill/metrics.hpp"
#include "introdistill/network.hpp"
#include "introdistill/optimizer.hpp"

namespace introdistill {

enum class PretrainMethod { Standard, AT, TRADES };

std::string pretrain_name(PretrainMethod m);
PretrainMethod pretrain_from_name(const std::string& name);

struct OptimConfig {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 2e-4;
  std::vector<std::size_t> milestones;
  double lr_decay = 0.1;
};

struct RunConfig {
  NetworkSpec network;
  AttackBudget train_attack;  // random start by default (set by callers)
  AttackBudget eval_attack;   // must use a deterministic start
  DistillSpec distill;
  PretrainMethod pretrain_method = PretrainMethod::AT;
  std::size_t epochs = 10;
  std::size_t batch_size = 128;
  OptimConfig optim;
  std::uint64_t seed = 1;
  bool deterministic = true;
  std::size_t eval_subset = 0;    // cap on per-epoch test evaluation; 0 = all
  std::string snapshot_dir;       // per-epoch checkpoints when non-empty
};

struct TrainResult {
  Network best;
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
  std::vector<EpochRecord> records;
};

// Teacher pretraining (standard, AT or TRADES). Keeps the checkpoint with the
// best PGD test accuracy (best natural accuracy for standard training).
TrainResult pretrain(const RunConfig& cfg, const DatasetHandle& data,
                     MetricsWriter* metrics = nullptr);

// Adversarial distillation: per batch, adversarial data is generated against
// the student, teacher probabilities give the trust weights, and the
// configured loss is stepped. Returns the best-PGD checkpoint.
TrainResult distill(const RunConfig& cfg, const DatasetHandle& data,
                    const Network& teacher_at,
                    const Network* teacher_st = nullptr,
                    MetricsWriter* metrics = nullptr);

// Natural accuracy plus robust accuracy per named attack. Evaluation attacks
// must be configured with a deterministic start.
std::map<std::string, double> evaluate(
    const Network& net, const NdArray& x, const std::vector<int>& y,
    const std::vector<std::pair<std::string, AttackBudget>>& attacks);

}  // namespace introdistill
