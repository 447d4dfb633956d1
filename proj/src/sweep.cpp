#include "elr/sweep.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "elr/errors.hpp"
#include "elr/metrics_io.hpp"

namespace elr {

namespace fs = std::filesystem;
using nlohmann::json;
using config_detail::ObjectReader;

namespace {

Distribution parse_distribution(const std::string& path, const json& j) {
  if (!j.is_object() || j.size() != 1) {
    throw ConfigError("random." + path + ": expected one of {uniform|log_uniform|int_uniform|choice}");
  }
  Distribution d;
  const auto& [kind, arg] = *j.items().begin();
  if (kind == "choice") {
    if (!arg.is_array() || arg.empty()) throw ConfigError("random." + path + ": empty choice list");
    d.kind = DistributionKind::Choice;
    d.choices.assign(arg.begin(), arg.end());
    return d;
  }
  if (kind == "uniform") {
    d.kind = DistributionKind::Uniform;
  } else if (kind == "log_uniform") {
    d.kind = DistributionKind::LogUniform;
  } else if (kind == "int_uniform") {
    d.kind = DistributionKind::IntUniform;
  } else {
    throw ConfigError("random." + path + ": unknown distribution '" + kind + "'");
  }
  if (!arg.is_array() || arg.size() != 2 || !arg[0].is_number() || !arg[1].is_number()) {
    throw ConfigError("random." + path + ": expected [low, high]");
  }
  d.low = arg[0].get<double>();
  d.high = arg[1].get<double>();
  if (!(d.low <= d.high)) throw ConfigError("random." + path + ": low exceeds high");
  if (d.kind == DistributionKind::LogUniform && !(d.low > 0.0)) {
    throw ConfigError("random." + path + ": log_uniform needs positive bounds");
  }
  return d;
}

json draw(const Distribution& d, std::mt19937_64& rng) {
  switch (d.kind) {
    case DistributionKind::Uniform:
      return std::uniform_real_distribution<double>(d.low, d.high)(rng);
    case DistributionKind::LogUniform:
      return std::exp(std::uniform_real_distribution<double>(std::log(d.low), std::log(d.high))(rng));
    case DistributionKind::IntUniform:
      return std::uniform_int_distribution<long long>(std::llround(d.low), std::llround(d.high))(rng);
    case DistributionKind::Choice:
      return d.choices[std::uniform_int_distribution<std::size_t>(0, d.choices.size() - 1)(rng)];
  }
  return nullptr;
}

// Sets a dotted path that must already exist in the normalized config JSON.
void set_path(json& root, const std::string& path, const json& value) {
  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const auto key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(key)) {
      throw ConfigError("sweep: '" + path + "' does not name a config field");
    }
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = value;
}

ExperimentConfig make_trial(const json& normalized_base, const std::vector<std::pair<std::string, json>>& overrides,
                            const SweepSpec& spec, std::size_t index) {
  json j = normalized_base;
  for (const auto& [path, value] : overrides) set_path(j, path, value);
  j["epochs"] = spec.sweep_epochs;
  auto config = experiment_config_from_json(j);
  config.name = "trial-" + std::to_string(index);
  config.output_dir = (fs::path(spec.output_dir) / config_hash(config)).string();
  return config;
}

}  // namespace

void SweepSpec::validate() const {
  if (sweep_epochs < 0 || refit_epochs < 0) throw ConfigError("sweep: epochs must be non-negative");
  if (parallel < 1) throw ConfigError("sweep: parallel must be at least 1");
  if (max_runs < 0) throw ConfigError("sweep: max_runs must be non-negative");
  if (mode == SweepMode::Random && max_runs < 1) {
    throw ConfigError("sweep: random mode needs max_runs");
  }
  for (const auto& axis : grid) {
    if (axis.values.empty()) throw ConfigError("grid." + axis.path + ": no values");
  }
}

SweepSpec sweep_spec_from_json(const json& j) {
  SweepSpec s;
  ObjectReader r(j, "sweep");
  if (!r.has("base")) throw ConfigError("sweep: missing 'base' config");
  s.base = r.child("base");
  std::string mode = "grid";
  r.read("mode", mode);
  if (mode == "grid") {
    s.mode = SweepMode::Grid;
  } else if (mode == "random") {
    s.mode = SweepMode::Random;
  } else {
    throw ConfigError("sweep.mode: unknown value '" + mode + "'");
  }
  if (r.has("grid")) {
    const auto& g = r.child("grid");
    if (!g.is_object()) throw ConfigError("sweep.grid: expected an object of value lists");
    for (const auto& [path, values] : g.items()) {
      if (!values.is_array()) throw ConfigError("grid." + path + ": expected a list");
      s.grid.push_back({path, std::vector<json>(values.begin(), values.end())});
    }
  }
  if (r.has("random")) {
    const auto& g = r.child("random");
    if (!g.is_object()) throw ConfigError("sweep.random: expected an object of distributions");
    for (const auto& [path, dist] : g.items()) s.random.push_back({path, parse_distribution(path, dist)});
  }
  r.read("max_runs", s.max_runs);
  r.read("seed", s.seed);
  r.read("sweep_epochs", s.sweep_epochs);
  r.read("refit_epochs", s.refit_epochs);
  r.read("parallel", s.parallel);
  r.read("output_dir", s.output_dir);
  r.finish();
  s.validate();
  return s;
}

SweepSpec load_sweep_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open sweep spec " + path);
  try {
    return sweep_spec_from_json(json::parse(in, nullptr, true, /*ignore_comments=*/true));
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::vector<ExperimentConfig> enumerate_trials(const SweepSpec& spec) {
  spec.validate();
  const json base = to_json(experiment_config_from_json(spec.base));
  std::vector<ExperimentConfig> out;

  if (spec.mode == SweepMode::Grid) {
    std::size_t total = 1;
    for (const auto& axis : spec.grid) total *= axis.values.size();
    if (spec.max_runs > 0) total = std::min<std::size_t>(total, static_cast<std::size_t>(spec.max_runs));
    for (std::size_t i = 0; i < total; ++i) {
      std::vector<std::pair<std::string, json>> overrides;
      std::size_t rest = i;
      for (auto axis = spec.grid.rbegin(); axis != spec.grid.rend(); ++axis) {
        overrides.emplace_back(axis->path, axis->values[rest % axis->values.size()]);
        rest /= axis->values.size();
      }
      out.push_back(make_trial(base, overrides, spec, i));
    }
    return out;
  }

  std::mt19937_64 rng(spec.seed);
  for (int i = 0; i < spec.max_runs; ++i) {
    std::vector<std::pair<std::string, json>> overrides;
    for (const auto& axis : spec.random) overrides.emplace_back(axis.path, draw(axis.distribution, rng));
    out.push_back(make_trial(base, overrides, spec, static_cast<std::size_t>(i)));
  }
  return out;
}

std::size_t select_best(const std::vector<TrialOutcome>& trials) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    if (!trials[i].result) continue;
    if (!best || trials[i].result->final_top1 > trials[*best].result->final_top1) best = i;
  }
  if (!best) throw Error("sweep: all " + std::to_string(trials.size()) + " runs failed");
  return *best;
}

SweepResult run_sweep(const SweepSpec& spec, bool refit) {
  SweepResult out;
  for (auto& config : enumerate_trials(spec)) out.trials.push_back({std::move(config), std::nullopt, {}});

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < out.trials.size(); i = next.fetch_add(1)) {
      auto& trial = out.trials[i];
      try {
        trial.result = run_experiment(trial.config);
      } catch (const std::exception& e) {
        trial.error = e.what();
      }
    }
  };
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(spec.parallel), out.trials.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  out.best = select_best(out.trials);

  json summary = json::array();
  for (std::size_t i = 0; i < out.trials.size(); ++i) {
    const auto& t = out.trials[i];
    json row = {{"index", i}, {"config_hash", config_hash(t.config)}, {"output_dir", t.config.output_dir}};
    if (t.result) {
      row["final_top1"] = t.result->final_top1;
      row["final_top5"] = t.result->final_top5;
    } else {
      row["error"] = t.error;
    }
    summary.push_back(std::move(row));
  }

  if (refit) {
    auto config = out.trials[out.best].config;
    config.epochs = spec.refit_epochs;
    config.name = "refit";
    config.output_dir = (fs::path(spec.output_dir) / "refit").string();
    out.refit = run_experiment(config);
  }

  std::error_code ec;
  fs::create_directories(spec.output_dir, ec);
  std::ofstream f(fs::path(spec.output_dir) / "sweep.json");
  if (!f) throw IoError("cannot write sweep summary in " + spec.output_dir);
  json doc = {{"best", out.best}, {"trials", summary}, {"best_config", to_json(out.trials[out.best].config)}};
  if (out.refit) doc["refit"] = run_summary(*out.refit);
  f << doc.dump(2) << '\n';
  return out;
}

}  // namespace elr
