#include "introdistill/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "introdistill/checkpoint.hpp"
#include "introdistill/ops.hpp"

namespace introdistill {

std::string pretrain_name(PretrainMethod m) {
  switch (m) {
    case PretrainMethod::Standard: return "standard";
    case PretrainMethod::AT: return "at";
    case PretrainMethod::TRADES: return "trades";
  }
  throw std::logic_error("pretrain_name: bad enum");
}

PretrainMethod pretrain_from_name(const std::string& name) {
  if (name == "standard") return PretrainMethod::Standard;
  if (name == "at") return PretrainMethod::AT;
  if (name == "trades") return PretrainMethod::TRADES;
  throw std::invalid_argument("unknown pretraining method '" + name + "'");
}

namespace {

constexpr std::size_t kEvalChunk = 256;

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed,
                                     std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(Rng::derive(seed, {streams::kShuffle, epoch}));
  rng.shuffle(order);
  return order;
}

std::vector<std::size_t> iota_subset(std::size_t n, std::size_t cap) {
  const std::size_t m = cap == 0 ? n : std::min(n, cap);
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

struct EvalBudgets {
  std::vector<std::pair<std::string, AttackBudget>> list;
};

EvalBudgets epoch_eval_budgets(const RunConfig& cfg) {
  EvalBudgets b;
  AttackBudget fgsm_budget = cfg.eval_attack;
  fgsm_budget.steps = 1;
  fgsm_budget.step_size = fgsm_budget.epsilon > 0 ? fgsm_budget.epsilon : 1.0;
  fgsm_budget.random_start = false;
  fgsm_budget.objective = AttackObjective::CeHardLabel;
  b.list.emplace_back("fgsm", fgsm_budget);
  AttackBudget pgd_budget = cfg.eval_attack;
  pgd_budget.random_start = false;
  b.list.emplace_back("pgd", pgd_budget);
  return b;
}

void maybe_save_snapshot(const RunConfig& cfg, const Network& net,
                         const std::string& method, std::size_t epoch,
                         const EpochRecord& rec) {
  if (cfg.snapshot_dir.empty()) return;
  std::filesystem::create_directories(cfg.snapshot_dir);
  Provenance prov;
  prov.method = method;
  prov.epoch = epoch;
  prov.metrics["natural_acc"] = rec.natural_acc;
  prov.metrics["pgd_acc"] = rec.pgd_acc;
  std::ostringstream name;
  name << cfg.snapshot_dir << "/epoch_";
  name.width(4);
  name.fill('0');
  name << epoch;
  std::ostringstream file;
  file << name.str() << ".ckpt";
  save_checkpoint(net, prov, file.str());
}

void check_dataset_network(const RunConfig& cfg, const DatasetHandle& data) {
  data.validate();
  if (data.classes != cfg.network.classes) {
    throw std::invalid_argument("trainer: network expects " +
                                std::to_string(cfg.network.classes) +
                                " classes, dataset has " +
                                std::to_string(data.classes));
  }
  if (data.input_numel() != cfg.network.input_numel()) {
    throw std::invalid_argument("trainer: input size mismatch");
  }
  if (data.train_y.empty()) {
    throw std::invalid_argument("trainer: empty training split");
  }
}

double checked_loss_value(const Var& loss, std::size_t epoch,
                          std::size_t batch) {
  const double v = loss.value().item();
  if (!std::isfinite(v)) {
    throw std::runtime_error(
        "trainer: non-finite loss at epoch " + std::to_string(epoch) +
        ", batch " + std::to_string(batch) +
        " (diverged or mis-configured run)");
  }
  return v;
}

}  // namespace

std::map<std::string, double> evaluate(
    const Network& net, const NdArray& x, const std::vector<int>& y,
    const std::vector<std::pair<std::string, AttackBudget>>& attacks) {
  if (y.empty() || x.dim(0) == 0) {
    throw std::invalid_argument("evaluate: empty split");
  }
  for (const auto& [name, budget] : attacks) {
    if (budget.random_start) {
      throw std::invalid_argument("evaluate: attack '" + name +
                                  "' must use a deterministic start");
    }
  }
  std::map<std::string, double> acc;
  std::size_t natural_hits = 0;
  std::map<std::string, std::size_t> hits;
  for (const auto& [name, budget] : attacks) hits[name] = 0;

  const std::size_t n = y.size();
  const std::size_t d = x.dim(1);
  for (std::size_t start = 0; start < n; start += kEvalChunk) {
    const std::size_t count = std::min(kEvalChunk, n - start);
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), start);
    const NdArray xb = gather_rows(x, idx);
    const std::vector<int> yb(y.begin() + static_cast<long>(start),
                              y.begin() + static_cast<long>(start + count));
    const std::vector<int> nat_pred = argmax_rows(infer(net, xb));
    for (std::size_t i = 0; i < count; ++i) {
      if (nat_pred[i] == yb[i]) ++natural_hits;
    }
    for (const auto& [name, budget] : attacks) {
      const NdArray adv = pgd(net, xb, yb, budget);
      const std::vector<int> pred = argmax_rows(infer(net, adv));
      for (std::size_t i = 0; i < count; ++i) {
        if (pred[i] == yb[i]) ++hits[name];
      }
    }
  }
  acc["natural"] = static_cast<double>(natural_hits) / static_cast<double>(n);
  for (const auto& [name, budget] : attacks) {
    acc[name] = static_cast<double>(hits[name]) / static_cast<double>(n);
  }
  return acc;
}

namespace {

// Shared epoch scaffold for pretraining and distillation. The batch step is
// supplied by the caller; records, snapshotting and best tracking live here.
struct EpochStats {
  double loss_sum = 0.0;
  double alpha_sum = 0.0;
  double gamma_sum = 0.0;
  std::size_t examples = 0;
  ReliabilityPartition partition;
  std::size_t teacher_adv_hits = 0;
  bool has_teacher = false;
  bool has_guidance = false;
};

template <class BatchStep>
TrainResult run_training(const RunConfig& cfg, const DatasetHandle& data,
                         const std::string& method_label, bool best_by_pgd,
                         MetricsWriter* metrics, Network& net,
                         const BatchStep& step) {
  LrSchedule sched{cfg.optim.lr, cfg.optim.milestones, cfg.optim.lr_decay};
  sched.validate();
  SgdOptimizer opt(net, cfg.optim.momentum, cfg.optim.weight_decay);

  const std::size_t n = data.train_y.size();
  const EvalBudgets eval_budgets = epoch_eval_budgets(cfg);
  const std::vector<std::size_t> eval_idx =
      iota_subset(data.test_y.size(), cfg.eval_subset);
  NdArray eval_x;
  std::vector<int> eval_y;
  if (!eval_idx.empty()) {
    eval_x = gather_rows(data.test_x, eval_idx);
    for (std::size_t i : eval_idx) eval_y.push_back(data.test_y[i]);
  }

  TrainResult result;
  result.best = net;
  result.best_metric = -1.0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = sched.at_epoch(epoch);
    const std::vector<std::size_t> order = epoch_order(n, cfg.seed, epoch);

    EpochStats stats;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - start);
      std::vector<std::size_t> idx(order.begin() + static_cast<long>(start),
                                   order.begin() +
                                       static_cast<long>(start + count));
      const NdArray xb = gather_rows(data.train_x, idx);
      std::vector<int> yb(count);
      for (std::size_t i = 0; i < count; ++i) yb[i] = data.train_y[idx[i]];

      const double batch_loss = step(epoch, batch_index, xb, yb, lr, opt, stats);
      stats.loss_sum += batch_loss * static_cast<double>(count);
      stats.examples += count;
      ++batch_index;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = stats.loss_sum / static_cast<double>(stats.examples);
    rec.lr = lr;
    if (!eval_y.empty()) {
      const auto acc = evaluate(net, eval_x, eval_y, eval_budgets.list);
      rec.natural_acc = acc.at("natural");
      rec.fgsm_acc = acc.at("fgsm");
      rec.pgd_acc = acc.at("pgd");
    }
    if (stats.has_teacher) {
      rec.teacher_adv_acc = static_cast<double>(stats.teacher_adv_hits) /
                            static_cast<double>(stats.examples);
      rec.partition = stats.partition;
    }
    if (stats.has_guidance) {
      rec.mean_alpha = stats.alpha_sum / static_cast<double>(stats.examples);
      rec.mean_gamma = stats.gamma_sum / static_cast<double>(stats.examples);
    }
    const auto t1 = std::chrono::steady_clock::now();
    rec.wall_clock_s =
        cfg.deterministic
            ? 0.0
            : std::chrono::duration<double>(t1 - t0).count();
    result.records.push_back(rec);
    if (metrics) metrics->append(rec);
    maybe_save_snapshot(cfg, net, method_label, epoch, rec);

    const double metric = best_by_pgd ? rec.pgd_acc : rec.natural_acc;
    if (metric > result.best_metric) {
      result.best_metric = metric;
      result.best_epoch = epoch;
      result.best = net;
    }
  }
  return result;
}

std::vector<NdArray> student_grads(const BoundNet& bound) {
  std::vector<NdArray> grads;
  grads.reserve(bound.params.size());
  for (const Var& p : bound.params) grads.push_back(p.grad());
  return grads;
}

}  // namespace

TrainResult pretrain(const RunConfig& cfg, const DatasetHandle& data,
                     MetricsWriter* metrics) {
  check_dataset_network(cfg, data);
  Network net = Network::init(cfg.network, cfg.seed);
  const bool best_by_pgd = cfg.pretrain_method != PretrainMethod::Standard;

  auto step = [&](std::size_t epoch, std::size_t batch, const NdArray& xb,
                  const std::vector<int>& yb, double lr, SgdOptimizer& opt,
                  EpochStats& stats) {
    (void)stats;
    NdArray x_adv;
    if (cfg.pretrain_method != PretrainMethod::Standard) {
      AttackBudget budget = cfg.train_attack;
      if (cfg.pretrain_method == PretrainMethod::TRADES) {
        budget.objective = AttackObjective::KlToNatural;
      }
      Rng atk(Rng::derive(cfg.seed, {streams::kAttack, epoch, batch}));
      x_adv = pgd(net, xb, yb, budget, &atk);
    }

    Tape tape;
    BoundNet bound = bind(tape, net, true);
    Var loss;
    switch (cfg.pretrain_method) {
      case PretrainMethod::Standard:
        loss = mean_all(tape, cross_entropy(
                                  tape, forward(tape, bound, tape.constant(xb)),
                                  yb));
        break;
      case PretrainMethod::AT:
        loss = at_loss(tape, bound, x_adv, yb);
        break;
      case PretrainMethod::TRADES:
        loss = trades_loss(tape, bound, xb, x_adv, yb, cfg.distill);
        break;
    }
    const double v = checked_loss_value(loss, epoch, batch);
    tape.backward(loss);
    opt.step(net, student_grads(bound), lr);
    return v;
  };

  TrainResult result =
      run_training(cfg, data, pretrain_name(cfg.pretrain_method), best_by_pgd,
                   metrics, net, step);
  return result;
}

TrainResult distill(const RunConfig& cfg, const DatasetHandle& data,
                    const Network& teacher_at, const Network* teacher_st,
                    MetricsWriter* metrics) {
  check_dataset_network(cfg, data);
  cfg.distill.validate();
  if (!method_needs_teacher(cfg.distill.method)) {
    throw std::invalid_argument("distill: method '" +
                                method_name(cfg.distill.method) +
                                "' is a training method, not distillation");
  }
  if (teacher_at.spec().classes != cfg.network.classes) {
    throw std::invalid_argument("distill: teacher/student class count mismatch");
  }
  if (method_needs_std_teacher(cfg.distill.method)) {
    if (teacher_st == nullptr) {
      throw std::invalid_argument("distill: method '" +
                                  method_name(cfg.distill.method) +
                                  "' requires a standard teacher");
    }
    if (teacher_st->spec().classes != cfg.network.classes) {
      throw std::invalid_argument(
          "distill: standard teacher class count mismatch");
    }
  }

  Network net = Network::init(cfg.network, cfg.seed);
  const bool guidance = method_uses_guidance(cfg.distill.method);

  auto step = [&](std::size_t epoch, std::size_t batch, const NdArray& xb,
                  const std::vector<int>& yb, double lr, SgdOptimizer& opt,
                  EpochStats& stats) {
    stats.has_teacher = true;
    stats.has_guidance = guidance;

    // Adversarial data is generated against the student itself.
    Rng atk(Rng::derive(cfg.seed, {streams::kAttack, epoch, batch}));
    const NdArray x_adv = pgd(net, xb, yb, cfg.train_attack, &atk);

    const NdArray t_adv_logits = infer(teacher_at, x_adv);
    const NdArray t_nat_logits = infer(teacher_at, xb);
    const ReliabilityPartition part =
        partition_from_logits(t_nat_logits, t_adv_logits, yb);
    stats.partition += part;
    stats.teacher_adv_hits += part.n_case1 + part.n_case4;

    const ConfiguredLoss cl = select_loss(cfg.distill, epoch);
    GuidanceWeights w;
    if (guidance) {
      w = cl.weights(softmax_rows(t_adv_logits, 1.0), yb);
      for (double a : w.alpha) stats.alpha_sum += a;
      for (double g : w.gamma) stats.gamma_sum += g;
    }

    Tape tape;
    BoundNet student = bind(tape, net, true);
    BoundNet t_at = bind(tape, teacher_at, false);
    BoundNet t_st;
    if (teacher_st != nullptr) t_st = bind(tape, *teacher_st, false);
    Var loss = cl.evaluate(tape, student, &t_at,
                           teacher_st != nullptr ? &t_st : nullptr, xb, x_adv,
                           yb, w);
    const double v = checked_loss_value(loss, epoch, batch);
    tape.backward(loss);
    opt.step(net, student_grads(student), lr);
    return v;
  };

  return run_training(cfg, data, method_name(cfg.distill.method),
                      /*best_by_pgd=*/true, metrics, net, step);
}

}  // namespace introdistill
