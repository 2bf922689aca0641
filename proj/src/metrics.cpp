#include "introdistill/metrics.hpp"

#include <stdexcept>

#include <json.hpp>

namespace introdistill {

namespace {
using ordered = nlohmann::ordered_json;
}

std::string record_to_json_line(const EpochRecord& r) {
  ordered j;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["natural_acc"] = r.natural_acc;
  j["fgsm_acc"] = r.fgsm_acc;
  j["pgd_acc"] = r.pgd_acc;
  if (r.teacher_adv_acc) j["teacher_adv_acc"] = *r.teacher_adv_acc;
  else j["teacher_adv_acc"] = nullptr;
  if (r.partition) {
    j["case1"] = r.partition->n_case1;
    j["case2"] = r.partition->n_case2;
    j["case3"] = r.partition->n_case3;
    j["case4"] = r.partition->n_case4;
  } else {
    j["case1"] = nullptr;
    j["case2"] = nullptr;
    j["case3"] = nullptr;
    j["case4"] = nullptr;
  }
  if (r.mean_alpha) j["mean_alpha"] = *r.mean_alpha;
  else j["mean_alpha"] = nullptr;
  if (r.mean_gamma) j["mean_gamma"] = *r.mean_gamma;
  else j["mean_gamma"] = nullptr;
  j["lr"] = r.lr;
  j["wall_clock_s"] = r.wall_clock_s;
  return j.dump();
}

EpochRecord record_from_json_line(const std::string& line) {
  const nlohmann::json j = nlohmann::json::parse(line);
  EpochRecord r;
  r.epoch = j.at("epoch").get<std::size_t>();
  r.train_loss = j.at("train_loss").get<double>();
  r.natural_acc = j.at("natural_acc").get<double>();
  r.fgsm_acc = j.at("fgsm_acc").get<double>();
  r.pgd_acc = j.at("pgd_acc").get<double>();
  if (!j.at("teacher_adv_acc").is_null()) {
    r.teacher_adv_acc = j.at("teacher_adv_acc").get<double>();
  }
  if (!j.at("case1").is_null()) {
    ReliabilityPartition part;
    part.n_case1 = j.at("case1").get<std::size_t>();
    part.n_case2 = j.at("case2").get<std::size_t>();
    part.n_case3 = j.at("case3").get<std::size_t>();
    part.n_case4 = j.at("case4").get<std::size_t>();
    r.partition = part;
  }
  if (!j.at("mean_alpha").is_null()) {
    r.mean_alpha = j.at("mean_alpha").get<double>();
  }
  if (!j.at("mean_gamma").is_null()) {
    r.mean_gamma = j.at("mean_gamma").get<double>();
  }
  r.lr = j.at("lr").get<double>();
  r.wall_clock_s = j.at("wall_clock_s").get<double>();
  return r;
}

MetricsWriter::MetricsWriter(const std::string& path)
    : path_(path), out_(path, std::ios::trunc) {
  if (!out_) throw std::runtime_error("metrics: cannot open " + path);
}

void MetricsWriter::append(const EpochRecord& r) {
  out_ << record_to_json_line(r) << "\n";
  out_.flush();
  if (!out_) throw std::runtime_error("metrics: write failed for " + path_);
}

std::vector<EpochRecord> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("metrics: cannot open " + path);
  std::vector<EpochRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    records.push_back(record_from_json_line(line));
  }
  return records;
}

void write_report_csv(const std::vector<EpochRecord>& records,
                      const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("report: cannot open " + path);
  out << "epoch,train_loss,natural_acc,fgsm_acc,pgd_acc,teacher_adv_acc,"
         "case1,case2,case3,case4,mean_alpha,mean_gamma,lr,wall_clock_s\n";
  auto opt = [](const std::optional<double>& v) {
    return v ? std::to_string(*v) : std::string();
  };
  for (const EpochRecord& r : records) {
    out << r.epoch << ',' << r.train_loss << ',' << r.natural_acc << ','
        << r.fgsm_acc << ',' << r.pgd_acc << ',' << opt(r.teacher_adv_acc)
        << ',';
    if (r.partition) {
      out << r.partition->n_case1 << ',' << r.partition->n_case2 << ','
          << r.partition->n_case3 << ',' << r.partition->n_case4;
    } else {
      out << ",,,";
    }
    out << ',' << opt(r.mean_alpha) << ',' << opt(r.mean_gamma) << ',' << r.lr
        << ',' << r.wall_clock_s << "\n";
  }
  if (!out) throw std::runtime_error("report: write failed for " + path);
}

}  // namespace introdistill
