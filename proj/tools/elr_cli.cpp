// Command-line entry point: train, sweep, diagnose.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "elr/checkpoint.hpp"
#include "elr/config.hpp"
#include "elr/errors.hpp"
#include "elr/experiment.hpp"
#include "elr/metrics_io.hpp"
#include "elr/sweep.hpp"

namespace {

enum ExitCode { kOk = 0, kConfigError = 1, kIoError = 2, kNumericalAbort = 3 };

void print_row(const elr::MetricsRow& r) {
  std::printf("epoch %4d  lr %.5f  train %.4f (ce %.4f, elr %.4f)  test ce %.4f  top1 %.4f  top5 %.4f",
              r.epoch, r.lr, r.train_total, r.train_ce, r.train_elr, r.test_ce, r.top1, r.top5);
  if (!r.memorization.empty()) {
    std::printf("  mem %.3f/%.3f/%.3f", r.memorization.frac_correct, r.memorization.frac_memorized,
                r.memorization.frac_other);
  }
  std::printf("\n");
  std::fflush(stdout);
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              std::optional<std::string> out, bool quiet) {
  auto config = elr::load_experiment_config(config_path);
  if (seed) config.seed = *seed;
  if (out) config.output_dir = *out;
  if (config.output_dir.empty()) config.output_dir = "runs/" + elr::config_hash(config);
  elr::RunHooks hooks;
  if (!quiet) hooks.on_epoch = print_row;
  auto result = elr::run_experiment(config, hooks);
  std::printf("final top1 %.4f  top5 %.4f  -> %s\n", result.final_top1, result.final_top5,
              config.output_dir.c_str());
  return kOk;
}

int cmd_sweep(const std::string& spec_path, bool refit) {
  auto spec = elr::load_sweep_spec(spec_path);
  auto result = elr::run_sweep(spec, refit);
  for (std::size_t i = 0; i < result.trials.size(); ++i) {
    const auto& t = result.trials[i];
    if (t.result) {
      std::printf("trial %3zu  %s  top1 %.4f%s\n", i, elr::config_hash(t.config).c_str(),
                  t.result->final_top1, i == result.best ? "  <- best" : "");
    } else {
      std::printf("trial %3zu  %s  failed: %s\n", i, elr::config_hash(t.config).c_str(),
                  t.error.c_str());
    }
  }
  if (result.refit) {
    std::printf("refit: top1 %.4f  top5 %.4f  -> %s\n", result.refit->final_top1,
                result.refit->final_top5, result.refit->config.output_dir.c_str());
  }
  return kOk;
}

int cmd_diagnose(const std::string& checkpoint_path, const std::string& dataset_path) {
  auto ckpt = elr::load_checkpoint(checkpoint_path);
  auto config = elr::load_experiment_config(dataset_path);
  auto data = elr::prepare_data(config);
  const auto& m = ckpt.model.config();
  const auto& shape = data.train.images.shape();
  if (m.num_classes != data.train.num_classes ||
      !(m.input == elr::InputShape{shape[1], shape[2], shape[3]})) {
    throw elr::ConfigError("checkpoint model does not match the dataset");
  }
  const bool elr_loss = config.loss.kind == elr::LossKind::Elr;
  const elr::TargetStore* targets = nullptr;
  if (elr_loss && ckpt.targets && ckpt.targets->num_samples() == data.total_samples) {
    targets = &*ckpt.targets;
  }
  const double lambda = targets ? config.loss.lambda : 0.0;
  const auto batch = static_cast<std::size_t>(config.batch_size);
  auto tr = elr::evaluate(ckpt.model, data.train, data.augment, targets, lambda, batch,
                          elr::LabelSource::Given);
  auto te = elr::evaluate(ckpt.model, data.test, data.augment, targets, lambda, batch,
                          elr::LabelSource::True);
  auto mem = elr::memorization_fractions(tr.predictions, data.train);
  nlohmann::json report = {
      {"train_ce", tr.ce},  {"train_elr", tr.elr}, {"train_total", tr.total},
      {"test_ce", te.ce},   {"test_total", te.total}, {"top1", te.top1},
      {"top5", te.top5},    {"flipped", mem.flipped},
  };
  if (!mem.empty()) {
    report["mem_correct"] = mem.frac_correct;
    report["mem_memorized"] = mem.frac_memorized;
    report["mem_other"] = mem.frac_other;
  }
  std::cout << report.dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Early-learning regularization training harness"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Train one configuration");
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool quiet = false;
  train->add_option("--config", config_path, "Experiment config (JSON)")->required();
  train->add_option("--seed", seed, "Override the run seed");
  train->add_option("--out", out, "Output directory");
  train->add_flag("--quiet", quiet, "No per-epoch output");

  auto* sweep = app.add_subcommand("sweep", "Grid or random hyperparameter sweep");
  std::string spec_path;
  bool refit = false;
  sweep->add_option("--spec", spec_path, "Sweep spec (JSON)")->required();
  sweep->add_flag("--refit", refit, "Retrain the best trial for refit_epochs");

  auto* diagnose = app.add_subcommand("diagnose", "Recompute metrics from a checkpoint");
  std::string checkpoint_path, dataset_path;
  diagnose->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  diagnose->add_option("--dataset", dataset_path,
                       "Experiment config naming the dataset, noise and split")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*train) return cmd_train(config_path, seed, out, quiet);
    if (*sweep) return cmd_sweep(spec_path, refit);
    if (*diagnose) return cmd_diagnose(checkpoint_path, dataset_path);
  } catch (const elr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const elr::IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIoError;
  } catch (const elr::FormatError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIoError;
  } catch (const elr::NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return kNumericalAbort;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
  return kOk;
}
