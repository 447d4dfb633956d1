#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "elr/experiment.hpp"

namespace elr {

inline constexpr const char* kMetricsHeader =
    "epoch,lr,train_ce,train_elr,train_total,test_ce,test_total,top1,top5,"
    "mem_correct,mem_memorized,mem_other,seconds";

enum class MetricsFormat { Csv, Json };

// Shortest text that parses back to the same double.
std::string format_double(double v);

// One CSV line without newline. Memorization fields stay empty when no
// labels were flipped.
std::string format_metrics_row(const MetricsRow& row);

/// Appends rows to a CSV file, flushing each one.
class MetricsCsvWriter {
 public:
  explicit MetricsCsvWriter(const std::string& path);
  void write(const MetricsRow& row);

 private:
  std::ofstream out_;
  std::string path_;
};

nlohmann::json metrics_to_json(const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> metrics_from_json(const nlohmann::json& j);

std::vector<MetricsRow> read_metrics_csv(const std::string& path);
std::vector<MetricsRow> read_metrics_json(const std::string& path);
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);
void write_metrics_json(const std::string& path, const std::vector<MetricsRow>& rows);

nlohmann::json run_summary(const RunResult& result);

/// Writes metrics.csv or metrics.json, plus summary.json, into dir.
void emit_metrics(const RunResult& result, MetricsFormat format, const std::string& dir);

}  // namespace elr
