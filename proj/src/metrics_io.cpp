#include "elr/metrics_io.hpp"

#include <charconv>
#include <filesystem>
#include <sstream>

#include "elr/errors.hpp"

namespace elr {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error("cannot format number");
  return std::string(buf, end);
}

std::string format_metrics_row(const MetricsRow& r) {
  std::string s = std::to_string(r.epoch);
  auto put = [&s](double v) {
    s += ',';
    s += format_double(v);
  };
  put(r.lr);
  put(r.train_ce);
  put(r.train_elr);
  put(r.train_total);
  put(r.test_ce);
  put(r.test_total);
  put(r.top1);
  put(r.top5);
  if (r.memorization.empty()) {
    s += ",,,";
  } else {
    put(r.memorization.frac_correct);
    put(r.memorization.frac_memorized);
    put(r.memorization.frac_other);
  }
  put(r.seconds);
  return s;
}

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir);
}

double parse_double(const std::string& field, const std::string& where) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw FormatError(where + ": bad number '" + field + "'");
  }
  return v;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  out.close();
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace

MetricsCsvWriter::MetricsCsvWriter(const std::string& path) : out_(path), path_(path) {
  if (!out_) throw IoError("cannot write " + path);
  out_ << kMetricsHeader << '\n';
  out_.flush();
}

void MetricsCsvWriter::write(const MetricsRow& row) {
  out_ << format_metrics_row(row) << '\n';
  out_.flush();
  if (!out_) throw IoError("failed writing " + path_);
}

json metrics_to_json(const std::vector<MetricsRow>& rows) {
  json arr = json::array();
  for (const auto& r : rows) {
    json o = {{"epoch", r.epoch},       {"lr", r.lr},
              {"train_ce", r.train_ce}, {"train_elr", r.train_elr},
              {"train_total", r.train_total}, {"test_ce", r.test_ce},
              {"test_total", r.test_total},   {"top1", r.top1},
              {"top5", r.top5},         {"seconds", r.seconds}};
    if (r.memorization.empty()) {
      o["mem_correct"] = nullptr;
      o["mem_memorized"] = nullptr;
      o["mem_other"] = nullptr;
    } else {
      o["mem_correct"] = r.memorization.frac_correct;
      o["mem_memorized"] = r.memorization.frac_memorized;
      o["mem_other"] = r.memorization.frac_other;
    }
    arr.push_back(std::move(o));
  }
  return arr;
}

std::vector<MetricsRow> metrics_from_json(const json& j) {
  std::vector<MetricsRow> rows;
  try {
    for (const auto& o : j) {
      MetricsRow r;
      r.epoch = o.at("epoch").get<int>();
      r.lr = o.at("lr").get<double>();
      r.train_ce = o.at("train_ce").get<double>();
      r.train_elr = o.at("train_elr").get<double>();
      r.train_total = o.at("train_total").get<double>();
      r.test_ce = o.at("test_ce").get<double>();
      r.test_total = o.at("test_total").get<double>();
      r.top1 = o.at("top1").get<double>();
      r.top5 = o.at("top5").get<double>();
      r.seconds = o.at("seconds").get<double>();
      r.memorization.epoch = r.epoch;
      if (!o.at("mem_correct").is_null()) {
        r.memorization.frac_correct = o.at("mem_correct").get<double>();
        r.memorization.frac_memorized = o.at("mem_memorized").get<double>();
        r.memorization.frac_other = o.at("mem_other").get<double>();
        // Like the CSV, the JSON rows carry fractions only; mark the record present.
        r.memorization.flipped = 1;
      }
      rows.push_back(r);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("metrics json: ") + e.what());
  }
  return rows;
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw FormatError(path + ": unexpected header");
  }
  std::vector<MetricsRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    const auto where = path + ":" + std::to_string(lineno);
    if (f.size() != 13) throw FormatError(where + ": expected 13 fields");
    MetricsRow r;
    r.epoch = static_cast<int>(parse_double(f[0], where));
    r.lr = parse_double(f[1], where);
    r.train_ce = parse_double(f[2], where);
    r.train_elr = parse_double(f[3], where);
    r.train_total = parse_double(f[4], where);
    r.test_ce = parse_double(f[5], where);
    r.test_total = parse_double(f[6], where);
    r.top1 = parse_double(f[7], where);
    r.top5 = parse_double(f[8], where);
    r.memorization.epoch = r.epoch;
    if (!f[9].empty()) {
      r.memorization.frac_correct = parse_double(f[9], where);
      r.memorization.frac_memorized = parse_double(f[10], where);
      r.memorization.frac_other = parse_double(f[11], where);
      // The CSV does not carry the flipped count; any positive value marks it present.
      r.memorization.flipped = 1;
    }
    r.seconds = parse_double(f[12], where);
    rows.push_back(r);
  }
  return rows;
}

std::vector<MetricsRow> read_metrics_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return metrics_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  MetricsCsvWriter w(path);
  for (const auto& r : rows) w.write(r);
}

void write_metrics_json(const std::string& path, const std::vector<MetricsRow>& rows) {
  write_text(path, metrics_to_json(rows).dump(1) + "\n");
}

json run_summary(const RunResult& result) {
  const auto& c = result.config;
  return {
      {"name", c.name},
      {"config_hash", config_hash(c)},
      {"final_top1", result.final_top1},
      {"final_top5", result.final_top5},
      {"epochs", c.epochs},
      {"loss", c.loss.kind == LossKind::Elr ? "elr" : "ce"},
      {"lambda", c.loss.lambda},
      {"beta", c.loss.beta},
      {"momentum", c.optimizer.momentum},
      {"weight_decay", c.optimizer.weight_decay},
      {"sam_rho", c.optimizer.sam_rho},
      {"batch_size", c.batch_size},
      {"noise_rate", c.noise.rate},
      {"checkpoint", result.checkpoint_path},
      {"config", to_json(c)},
  };
}

void emit_metrics(const RunResult& result, MetricsFormat format, const std::string& dir) {
  ensure_dir(dir);
  const fs::path base(dir);
  if (format == MetricsFormat::Csv) {
    write_metrics_csv((base / "metrics.csv").string(), result.metrics);
  } else {
    write_metrics_json((base / "metrics.json").string(), result.metrics);
  }
  write_text((base / "summary.json").string(), run_summary(result).dump(2) + "\n");
}

}  // namespace elr
