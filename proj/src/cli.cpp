#include "introdistill/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "introdistill/checkpoint.hpp"
#include "introdistill/dataset.hpp"
#include "introdistill/diagnostics.hpp"
#include "introdistill/idx.hpp"
#include "introdistill/metrics.hpp"
#include "introdistill/ops.hpp"
#include "introdistill/trainer.hpp"

namespace introdistill {

namespace {

namespace fs = std::filesystem;

struct CliState {
  // global
  std::uint64_t seed = 1;
  bool deterministic = true;
  std::string out_dir;

  // dataset
  std::string dataset = "gaussian-blobs";
  std::size_t data_n = 2000;
  std::size_t data_test_n = 500;
  std::uint64_t data_seed = 7;
  SyntheticParams synth;
  std::vector<std::size_t> data_shape = {2};
  std::string train_images, train_labels, test_images, test_labels;

  // network
  std::string arch = "mlp";
  std::vector<std::size_t> hidden = {32};

  // optimizer / run
  OptimConfig optim;
  std::size_t epochs = 10;
  std::size_t batch_size = 128;
  std::size_t eval_subset = 0;
  bool save_snapshots = false;
  std::string run_name;

  // attacks
  AttackBudget train_attack;
  double eval_epsilon = -1.0;  // <0: copy the training value
  double eval_step_size = -1.0;
  std::size_t eval_steps = 20;
  std::string attack_objective = "ce";

  // distillation
  std::string method;
  DistillSpec distill;
  std::string gamma_mode = "one-minus-alpha";
  std::string teacher_weight = "constant-one";
  std::string teacher_path, teacher_std_path;

  // attack-eval / diagnose / report
  std::string model_path;
  std::string attacks_csv = "fgsm,pgd20";
  std::string snapshots_dir;
  std::string metrics_path;
  std::string out_path;
};

void add_dataset_flags(CLI::App* cmd, CliState& st) {
  cmd->add_option("--dataset", st.dataset,
                  "Dataset: gaussian-blobs | two-moons | idx")
      ->capture_default_str();
  cmd->add_option("--data-n", st.data_n, "Synthetic training samples")
      ->capture_default_str();
  cmd->add_option("--data-test-n", st.data_test_n, "Synthetic test samples")
      ->capture_default_str();
  cmd->add_option("--data-seed", st.data_seed, "Synthetic generator seed")
      ->capture_default_str();
  cmd->add_option("--data-classes", st.synth.classes, "Class count")
      ->capture_default_str();
  cmd->add_option("--data-shape", st.data_shape,
                  "Input shape dims, e.g. 1 28 28")
      ->capture_default_str();
  cmd->add_option("--data-margin", st.synth.margin,
                  "Two-class exact margin (blobs)")
      ->capture_default_str();
  cmd->add_option("--data-sigma", st.synth.noise_sigma, "Noise sigma")
      ->capture_default_str();
  cmd->add_option("--data-clip", st.synth.noise_clip, "Noise clip (margin mode)")
      ->capture_default_str();
  cmd->add_option("--data-amplitude", st.synth.template_amplitude,
                  "Template contrast (blobs template mode)")
      ->capture_default_str();
  cmd->add_option("--data-bumps", st.synth.template_bumps,
                  "Template bump count")
      ->capture_default_str();
  cmd->add_option("--moon-gap", st.synth.moon_gap, "Moon separation")
      ->capture_default_str();
  cmd->add_option("--moon-noise", st.synth.moon_noise, "Moon noise radius")
      ->capture_default_str();
  cmd->add_option("--train-images", st.train_images, "IDX train images path");
  cmd->add_option("--train-labels", st.train_labels, "IDX train labels path");
  cmd->add_option("--test-images", st.test_images, "IDX test images path");
  cmd->add_option("--test-labels", st.test_labels, "IDX test labels path");
}

void add_network_flags(CLI::App* cmd, CliState& st) {
  cmd->add_option("--arch", st.arch, "Architecture: mlp | cnn-small")
      ->capture_default_str();
  cmd->add_option("--hidden", st.hidden,
                  "MLP hidden widths or cnn-small channel pair")
      ->capture_default_str();
}

void add_run_flags(CLI::App* cmd, CliState& st) {
  cmd->add_option("--epochs", st.epochs, "Training epochs")
      ->capture_default_str();
  cmd->add_option("--batch-size", st.batch_size, "Batch size")
      ->capture_default_str();
  cmd->add_option("--lr", st.optim.lr, "Base learning rate")
      ->capture_default_str();
  cmd->add_option("--momentum", st.optim.momentum, "SGD momentum")
      ->capture_default_str();
  cmd->add_option("--weight-decay", st.optim.weight_decay, "Weight decay")
      ->capture_default_str();
  cmd->add_option("--milestones", st.optim.milestones,
                  "Epochs where the learning rate decays");
  cmd->add_option("--lr-decay", st.optim.lr_decay, "Decay factor")
      ->capture_default_str();
  cmd->add_option("--eval-subset", st.eval_subset,
                  "Cap per-epoch evaluation to this many test samples (0=all)")
      ->capture_default_str();
  cmd->add_flag("--save-snapshots", st.save_snapshots,
                "Write a checkpoint every epoch");
  cmd->add_option("--run-name", st.run_name,
                  "Base name for output files (default: the method)");
}

void add_attack_flags(CLI::App* cmd, CliState& st) {
  cmd->add_option("--epsilon", st.train_attack.epsilon,
                  "Training attack radius")
      ->capture_default_str();
  cmd->add_option("--step-size", st.train_attack.step_size,
                  "Training attack step size")
      ->capture_default_str();
  cmd->add_option("--steps", st.train_attack.steps, "Training attack steps")
      ->capture_default_str();
  cmd->add_option("--clamp-lo", st.train_attack.clamp_lo, "Input lower bound")
      ->capture_default_str();
  cmd->add_option("--clamp-hi", st.train_attack.clamp_hi, "Input upper bound")
      ->capture_default_str();
  cmd->add_flag("--random-start,!--no-random-start",
                st.train_attack.random_start,
                "Random start for training attacks")
      ->default_val(true);
  cmd->add_option("--attack-objective", st.attack_objective,
                  "Training attack objective: ce | kl")
      ->capture_default_str();
  cmd->add_option("--eval-epsilon", st.eval_epsilon,
                  "Evaluation radius (default: training epsilon)");
  cmd->add_option("--eval-step-size", st.eval_step_size,
                  "Evaluation step size (default: epsilon/4)");
  cmd->add_option("--eval-steps", st.eval_steps, "Evaluation attack steps")
      ->capture_default_str();
}

void add_distill_flags(CLI::App* cmd, CliState& st) {
  cmd->add_option("--tau", st.distill.tau, "Distillation temperature")
      ->capture_default_str();
  cmd->add_option("--beta", st.distill.beta, "Trust-weight sharpening")
      ->capture_default_str();
  cmd->add_option("--gamma-mode", st.gamma_mode,
                  "one-minus-alpha | constant")
      ->capture_default_str();
  cmd->add_option("--gamma-constant", st.distill.gamma_constant,
                  "Constant introspection weight")
      ->capture_default_str();
  cmd->add_option("--lambda", st.distill.lambda, "Natural-CE weight")
      ->capture_default_str();
  cmd->add_option("--lambda1", st.distill.lambda1, "Hard-label weight")
      ->capture_default_str();
  cmd->add_option("--lambda2", st.distill.lambda2, "Robust-teacher weight")
      ->capture_default_str();
  cmd->add_option("--lambda3", st.distill.lambda3, "Standard-teacher weight")
      ->capture_default_str();
  cmd->add_option("--trades-weight", st.distill.trades_weight,
                  "Robust-regularization weight")
      ->capture_default_str();
  cmd->add_option("--warmup", st.distill.warmup_epochs, "Warm-up epochs")
      ->capture_default_str();
  cmd->add_option("--iad-i-teacher-weight", st.teacher_weight,
                  "constant-one | alpha")
      ->capture_default_str();
  cmd->add_flag("--iad-ii-nested", st.distill.iad_ii_nested,
                "Literal nested grouping of the second variant");
}

DatasetHandle build_dataset(const CliState& st) {
  if (st.dataset == "idx") {
    if (st.train_images.empty() || st.train_labels.empty()) {
      throw CLI::ValidationError(
          "--dataset idx requires --train-images and --train-labels");
    }
    return dataset_from_idx(st.train_images, st.train_labels, st.test_images,
                            st.test_labels);
  }
  SyntheticParams p = st.synth;
  p.input_shape = Shape(st.data_shape.begin(), st.data_shape.end());
  return make_synthetic(synthetic_kind_from_name(st.dataset), st.data_n,
                        st.data_test_n, st.data_seed, p);
}

RunConfig build_run_config(const CliState& st, const DatasetHandle& ds) {
  RunConfig cfg;
  cfg.network.kind = arch_from_name(st.arch);
  cfg.network.hidden = st.hidden;
  cfg.network.input_shape = ds.input_shape;
  cfg.network.classes = ds.classes;
  cfg.network.validate();

  cfg.train_attack = st.train_attack;
  cfg.train_attack.objective = st.attack_objective == "kl"
                                   ? AttackObjective::KlToNatural
                                   : AttackObjective::CeHardLabel;
  cfg.eval_attack = st.train_attack;
  cfg.eval_attack.random_start = false;
  cfg.eval_attack.objective = AttackObjective::CeHardLabel;
  cfg.eval_attack.epsilon =
      st.eval_epsilon >= 0.0 ? st.eval_epsilon : st.train_attack.epsilon;
  cfg.eval_attack.steps = st.eval_steps;
  cfg.eval_attack.step_size = st.eval_step_size > 0.0
                                  ? st.eval_step_size
                                  : std::max(cfg.eval_attack.epsilon / 4.0,
                                             1e-6);

  cfg.distill = st.distill;
  cfg.distill.gamma_mode = st.gamma_mode == "constant"
                               ? GammaMode::Constant
                               : GammaMode::OneMinusAlpha;
  if (st.gamma_mode != "constant" && st.gamma_mode != "one-minus-alpha") {
    throw CLI::ValidationError("unknown --gamma-mode '" + st.gamma_mode + "'");
  }
  cfg.distill.iad_i_teacher_weight = st.teacher_weight == "alpha"
                                         ? TeacherWeight::Alpha
                                         : TeacherWeight::ConstantOne;

  cfg.epochs = st.epochs;
  cfg.batch_size = st.batch_size;
  cfg.optim = st.optim;
  cfg.seed = st.seed;
  cfg.deterministic = st.deterministic;
  cfg.eval_subset = st.eval_subset;
  return cfg;
}

std::string output_base(const CliState& st, const std::string& fallback) {
  fs::create_directories(st.out_dir);
  const std::string name = st.run_name.empty() ? fallback : st.run_name;
  return (fs::path(st.out_dir) / name).string();
}

Provenance provenance_for(const std::string& method, const TrainResult& res) {
  Provenance prov;
  prov.method = method;
  prov.epoch = res.best_epoch;
  if (!res.records.empty()) {
    const EpochRecord& r = res.records[res.best_epoch];
    prov.metrics["natural_acc"] = r.natural_acc;
    prov.metrics["fgsm_acc"] = r.fgsm_acc;
    prov.metrics["pgd_acc"] = r.pgd_acc;
  }
  return prov;
}

int run_pretrain(CliState& st) {
  const PretrainMethod method = pretrain_from_name(st.method);
  DatasetHandle ds = build_dataset(st);
  RunConfig cfg = build_run_config(st, ds);
  cfg.pretrain_method = method;
  if (method == PretrainMethod::TRADES) cfg.distill.method = Method::TRADES;
  const std::string base = output_base(st, "pretrain-" + st.method);
  if (st.save_snapshots) cfg.snapshot_dir = base + "-snapshots";
  MetricsWriter metrics(base + "-metrics.jsonl");
  TrainResult res = pretrain(cfg, ds, &metrics);
  save_checkpoint(res.best, provenance_for(st.method, res), base + ".ckpt");
  std::cout << "pretrain " << st.method << ": best epoch " << res.best_epoch
            << ", metric " << res.best_metric << "\n"
            << "checkpoint: " << base << ".ckpt\n"
            << "metrics:    " << metrics.path() << "\n";
  return 0;
}

int run_distill(CliState& st) {
  st.distill.method = method_from_name(st.method);
  if (!method_needs_teacher(st.distill.method)) {
    throw CLI::ValidationError("distill --method must be one of ard, akd2, "
                               "iad-i, iad-ii");
  }
  if (st.teacher_path.empty()) {
    throw CLI::ValidationError("distill requires --teacher");
  }
  if (method_needs_std_teacher(st.distill.method) &&
      st.teacher_std_path.empty()) {
    throw CLI::ValidationError("--method " + st.method +
                               " requires --teacher-std");
  }
  DatasetHandle ds = build_dataset(st);
  RunConfig cfg = build_run_config(st, ds);
  LoadedCheckpoint teacher = load_checkpoint(st.teacher_path);
  LoadedCheckpoint teacher_std;
  const bool has_std = !st.teacher_std_path.empty();
  if (has_std) teacher_std = load_checkpoint(st.teacher_std_path);

  const std::string base = output_base(st, st.method);
  if (st.save_snapshots) cfg.snapshot_dir = base + "-snapshots";
  MetricsWriter metrics(base + "-metrics.jsonl");
  TrainResult res = distill(cfg, ds, teacher.net,
                            has_std ? &teacher_std.net : nullptr, &metrics);
  save_checkpoint(res.best, provenance_for(st.method, res), base + ".ckpt");
  std::cout << "distill " << st.method << ": best epoch " << res.best_epoch
            << ", pgd accuracy " << res.best_metric << "\n"
            << "checkpoint: " << base << ".ckpt\n"
            << "metrics:    " << metrics.path() << "\n";
  return 0;
}

std::vector<std::pair<std::string, AttackBudget>> parse_attacks(
    const CliState& st) {
  std::vector<std::pair<std::string, AttackBudget>> list;
  std::stringstream ss(st.attacks_csv);
  std::string item;
  AttackBudget base = st.train_attack;
  base.random_start = false;
  base.objective = AttackObjective::CeHardLabel;
  if (st.eval_epsilon >= 0.0) base.epsilon = st.eval_epsilon;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    AttackBudget b = base;
    if (item == "fgsm") {
      b.steps = 1;
      b.step_size = b.epsilon > 0 ? b.epsilon : 1.0;
    } else if (item.rfind("pgd", 0) == 0) {
      const std::string k = item.substr(3);
      b.steps = k.empty() ? st.eval_steps
                          : static_cast<std::size_t>(std::stoul(k));
      b.step_size = st.eval_step_size > 0.0 ? st.eval_step_size
                                            : std::max(b.epsilon / 4.0, 1e-6);
    } else {
      throw CLI::ValidationError("unknown attack '" + item + "'");
    }
    list.emplace_back(item, b);
  }
  if (list.empty()) throw CLI::ValidationError("--attacks is empty");
  return list;
}

int run_attack_eval(CliState& st) {
  if (st.model_path.empty()) {
    throw CLI::ValidationError("attack-eval requires --model");
  }
  DatasetHandle ds = build_dataset(st);
  LoadedCheckpoint model = load_checkpoint(st.model_path);
  const auto attacks = parse_attacks(st);
  const NdArray& x = ds.test_y.empty() ? ds.train_x : ds.test_x;
  const std::vector<int>& y = ds.test_y.empty() ? ds.train_y : ds.test_y;
  auto acc = evaluate(model.net, x, y, attacks);
  nlohmann::ordered_json j;
  for (const auto& [name, value] : acc) j[name] = value;
  const std::string base = output_base(st, "attack-eval");
  std::ofstream out(base + "-eval.json");
  out << j.dump(2) << "\n";
  std::cout << j.dump(2) << "\n";
  return 0;
}

int run_diagnose(CliState& st) {
  if (st.snapshots_dir.empty() || st.teacher_path.empty()) {
    throw CLI::ValidationError("diagnose requires --snapshots and --teacher");
  }
  DatasetHandle ds = build_dataset(st);
  LoadedCheckpoint teacher = load_checkpoint(st.teacher_path);

  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(st.snapshots_dir)) {
    if (entry.path().extension() == ".ckpt") {
      files.push_back(entry.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    throw CLI::ValidationError("no .ckpt snapshots in " + st.snapshots_dir);
  }

  AttackBudget budget = st.train_attack;
  budget.random_start = false;
  budget.objective = AttackObjective::CeHardLabel;

  const std::size_t cap = st.eval_subset == 0
                              ? ds.test_y.size()
                              : std::min(st.eval_subset, ds.test_y.size());
  std::vector<std::size_t> idx(cap);
  for (std::size_t i = 0; i < cap; ++i) idx[i] = i;
  const NdArray x = gather_rows(ds.test_x, idx);
  std::vector<int> y(ds.test_y.begin(), ds.test_y.begin() + static_cast<long>(cap));

  const std::string base = output_base(st, "diagnose");
  std::ofstream out(base + "-diagnostics.jsonl");
  for (const std::string& file : files) {
    LoadedCheckpoint snap = load_checkpoint(file);
    const NdArray x_adv = pgd(snap.net, x, y, budget);
    const NdArray t_adv_logits = infer(teacher.net, x_adv);
    const ReliabilityPartition part =
        partition_from_logits(infer(teacher.net, x), t_adv_logits, y);
    const std::vector<double> alpha = alpha_weights(
        softmax_rows(t_adv_logits, 1.0), y, st.distill.beta);
    const double combined = combined_guidance_accuracy(teacher.net, snap.net,
                                                       x_adv, y, alpha);
    nlohmann::ordered_json j;
    j["snapshot"] = fs::path(file).filename().string();
    j["epoch"] = snap.prov.epoch;
    j["teacher_adv_acc"] =
        static_cast<double>(part.n_case1 + part.n_case4) / part.total();
    j["case1"] = part.n_case1;
    j["case2"] = part.n_case2;
    j["case3"] = part.n_case3;
    j["case4"] = part.n_case4;
    j["combined_guidance_acc"] = combined;
    out << j.dump() << "\n";
    std::cout << j.dump() << "\n";
  }
  std::cout << "diagnostics: " << base << "-diagnostics.jsonl\n";
  return 0;
}

int run_report(CliState& st) {
  if (st.metrics_path.empty()) {
    throw CLI::ValidationError("report requires --metrics");
  }
  const std::vector<EpochRecord> records = read_metrics(st.metrics_path);
  const std::string out = st.out_path.empty()
                              ? output_base(st, "report") + ".csv"
                              : st.out_path;
  write_report_csv(records, out);
  std::cout << "wrote " << records.size() << " rows to " << out << "\n";
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CliState st;
  const char* env_out = std::getenv("INTRODISTILL_OUT_DIR");
  st.out_dir = env_out != nullptr ? env_out : "out";

  CLI::App app{"Adversarial distillation with introspective teacher trust"};
  app.set_config("--config", "", "Key-value config file; flags override it");
  std::string dump_config_path;
  app.add_option("--dump-config", dump_config_path,
                 "Write the effective configuration to this file and continue");
  app.add_option("--seed", st.seed, "Global RNG seed")->capture_default_str();
  app.add_flag("--deterministic,!--no-deterministic", st.deterministic,
               "Bit-reproducible mode (zeroes wall-clock in metrics)")
      ->capture_default_str();
  app.add_option("--out-dir", st.out_dir,
                 "Output directory (default: $INTRODISTILL_OUT_DIR or ./out)")
      ->capture_default_str();
  app.require_subcommand(1);

  CLI::App* pre = app.add_subcommand("pretrain", "Train a teacher");
  pre->add_option("--method", st.method, "standard | at | trades")
      ->required();
  add_dataset_flags(pre, st);
  add_network_flags(pre, st);
  add_run_flags(pre, st);
  add_attack_flags(pre, st);
  pre->add_option("--trades-weight", st.distill.trades_weight,
                  "Robust-regularization weight")
      ->capture_default_str();
  pre->add_option("--tau", st.distill.tau, "Temperature")->capture_default_str();

  CLI::App* dis = app.add_subcommand("distill", "Distill a student");
  dis->add_option("--method", st.method, "ard | akd2 | iad-i | iad-ii")
      ->required();
  dis->add_option("--teacher", st.teacher_path,
                  "Adversarially trained teacher checkpoint");
  dis->add_option("--teacher-std", st.teacher_std_path,
                  "Standard teacher checkpoint (akd2 / iad-ii)");
  add_dataset_flags(dis, st);
  add_network_flags(dis, st);
  add_run_flags(dis, st);
  add_attack_flags(dis, st);
  add_distill_flags(dis, st);

  CLI::App* ev = app.add_subcommand("attack-eval", "Evaluate a checkpoint");
  ev->add_option("--model", st.model_path, "Checkpoint to evaluate");
  ev->add_option("--attacks", st.attacks_csv, "e.g. fgsm,pgd20")
      ->capture_default_str();
  add_dataset_flags(ev, st);
  add_attack_flags(ev, st);

  CLI::App* di = app.add_subcommand("diagnose",
                                    "Teacher reliability over snapshots");
  di->add_option("--snapshots", st.snapshots_dir, "Snapshot directory");
  di->add_option("--teacher", st.teacher_path, "Teacher checkpoint");
  di->add_option("--beta", st.distill.beta, "Trust-weight sharpening")
      ->capture_default_str();
  add_dataset_flags(di, st);
  add_attack_flags(di, st);
  di->add_option("--diag-subset", st.eval_subset,
                 "Cap diagnosed samples (0=all)")
      ->capture_default_str();

  CLI::App* rep = app.add_subcommand("report", "JSONL metrics to CSV");
  rep->add_option("--metrics", st.metrics_path, "Metrics stream to read");
  rep->add_option("--out", st.out_path, "CSV output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (!dump_config_path.empty()) {
    std::ofstream out(dump_config_path);
    std::istringstream lines(app.config_to_str(false, false));
    std::string line;
    while (std::getline(lines, line)) {
      if (line.rfind("dump-config", 0) == 0) continue;
      out << line << "\n";
    }
  }

  try {
    if (pre->parsed()) return run_pretrain(st);
    if (dis->parsed()) return run_distill(st);
    if (ev->parsed()) return run_attack_eval(st);
    if (di->parsed()) return run_diagnose(st);
    if (rep->parsed()) return run_report(st);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 1;
}

int cli_main(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("introdistill");
  for (const std::string& a : args) argv.push_back(a.c_str());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace introdistill
