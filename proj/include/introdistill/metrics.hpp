#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "introdistill/diagnostics.hpp"

namespace introdistill {

// One epoch of training metrics. Teacher-related fields are absent (null in
// the JSONL stream) for runs without a teacher. In deterministic mode the
// wall clock is recorded as 0 so replayed runs produce byte-identical
// streams.
struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double natural_acc = 0.0;
  double fgsm_acc = 0.0;
  double pgd_acc = 0.0;
  std::optional<double> teacher_adv_acc;
  std::optional<ReliabilityPartition> partition;
  std::optional<double> mean_alpha;
  std::optional<double> mean_gamma;
  double lr = 0.0;
  double wall_clock_s = 0.0;
};

std::string record_to_json_line(const EpochRecord& r);
EpochRecord record_from_json_line(const std::string& line);

// Append-only JSON Lines writer; one object per record.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);
  void append(const EpochRecord& r);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ofstream out_;
};

std::vector<EpochRecord> read_metrics(const std::string& path);

// CSV export of a metric stream: a header row plus one row per record.
void write_report_csv(const std::vector<EpochRecord>& records,
                      const std::string& path);

}  // namespace introdistill
