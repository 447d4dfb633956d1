#include "elr/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "elr/checkpoint.hpp"
#include "elr/errors.hpp"
#include "elr/metrics_io.hpp"
#include "elr/ops.hpp"
#include "elr/optim.hpp"
#include "elr/schedule.hpp"

namespace elr {

namespace fs = std::filesystem;

namespace {

LabeledDataset load_dataset(const ExperimentConfig& config) {
  const auto& d = config.dataset;
  LabeledDataset ds;
  switch (d.kind) {
    case DatasetKind::Synthetic:
      ds = generate_synthetic(d.synthetic);
      break;
    case DatasetKind::Cifar10:
    case DatasetKind::Cifar100: {
      for (const auto& p : d.paths) {
        if (!fs::is_regular_file(p)) throw IoError("dataset file not found: " + p);
      }
      ds = load_cifar_binary(d.paths, d.kind == DatasetKind::Cifar10 ? CifarFormat::Cifar10
                                                                     : CifarFormat::Cifar100);
      break;
    }
  }
  if (d.subset > 0 && d.subset < ds.size()) {
    // Keep a seeded random subset, re-keyed so ids stay dense.
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(config.split_seed ^ 0x5bd1e995ULL);
    for (std::size_t i = 0; i < d.subset; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
      std::swap(order[i], order[pick(rng)]);
    }
    order.resize(d.subset);
    std::sort(order.begin(), order.end());
    ds = subset(ds, order);
    std::iota(ds.sample_ids.begin(), ds.sample_ids.end(), std::int64_t{0});
  }
  return ds;
}

struct Batch {
  Tensor images;
  std::vector<int> labels;
  std::vector<std::int64_t> ids;
};

Batch gather(const LabeledDataset& ds, std::span<const std::size_t> rows,
             LabelSource labels = LabelSource::Given) {
  Batch b;
  auto sub = subset(ds, rows);
  b.images = sub.images;
  b.labels = labels == LabelSource::Given ? std::move(sub.given_labels) : std::move(sub.true_labels);
  b.ids = std::move(sub.sample_ids);
  return b;
}

std::string step_context(int epoch, std::size_t step) {
  return "epoch " + std::to_string(epoch) + ", step " + std::to_string(step);
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& config) {
  auto ds = load_dataset(config);
  if (ds.size() < 2) throw ConfigError("dataset has fewer than 2 samples");
  PreparedData out;
  out.total_samples = ds.size();
  ds = inject_symmetric_noise(ds, config.noise);
  auto [train, test] = split_train_test(ds, config.split, config.split_seed);
  out.train = std::move(train);
  out.test = std::move(test);
  out.augment.crop_pad = config.augment.crop_pad;
  out.augment.hflip_prob = config.augment.hflip_prob;
  if (config.augment.normalize) {
    auto [mean, stdev] = channel_stats(out.train.images);
    out.augment.mean = std::move(mean);
    out.augment.std = std::move(stdev);
  }
  return out;
}

Evaluation evaluate(Model& model, const LabeledDataset& ds, const AugmentSpec& augment,
                    const TargetStore* targets, double lambda, std::size_t batch_size,
                    LabelSource labels) {
  NoGradGuard no_grad;
  const Mode previous = model.mode();
  model.set_mode(Mode::Eval);
  Evaluation ev;
  const std::size_t n = ds.size();
  const auto k = static_cast<std::size_t>(ds.num_classes);
  std::vector<double> all_logits;
  all_logits.reserve(n * k);
  double ce_sum = 0.0, elr_sum = 0.0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < n; start += batch_size) {
    rows.resize(std::min(batch_size, n - start));
    std::iota(rows.begin(), rows.end(), start);
    auto batch = gather(ds, rows, labels);
    auto logits = model.forward(normalize_batch(batch.images, augment));
    const double weight = static_cast<double>(rows.size());
    if (targets) {
      auto loss = elr_loss(logits, batch.labels, *targets, batch.ids, lambda);
      ce_sum += loss.ce_part * weight;
      elr_sum += loss.elr_part * weight;
    } else {
      ce_sum += cross_entropy(logits, batch.labels).item() * weight;
    }
    all_logits.insert(all_logits.end(), logits.data().begin(), logits.data().end());
  }
  model.set_mode(previous);
  if (n == 0) return ev;
  ev.ce = ce_sum / static_cast<double>(n);
  ev.elr = elr_sum / static_cast<double>(n);
  ev.total = ev.ce + lambda * ev.elr;
  const auto logits = Tensor::from({n, k}, std::move(all_logits));
  const auto& y = labels == LabelSource::Given ? ds.given_labels : ds.true_labels;
  ev.top1 = topk_accuracy(logits, y, 1);
  ev.top5 = topk_accuracy(logits, y, static_cast<int>(std::min<std::size_t>(5, k)));
  ev.predictions = argmax_rows(logits);
  return ev;
}

RunResult run_experiment(const ExperimentConfig& config, const RunHooks& hooks) {
  config.validate();
  RunResult result;
  result.config = config;

  auto data = prepare_data(config);
  auto model_cfg = config.model;
  model_cfg.num_classes = data.train.num_classes;
  const auto& shape = data.train.images.shape();
  model_cfg.input = {shape[1], shape[2], shape[3]};
  auto model = Model::build(model_cfg, config.seed);

  const bool use_elr = config.loss.kind == LossKind::Elr;
  const double lambda = use_elr ? config.loss.lambda : 0.0;
  TargetStore store(data.total_samples, static_cast<std::size_t>(data.train.num_classes),
                    config.loss.beta);
  OptimizerState optimizer(model.parameter_tensors(), config.optimizer);
  std::mt19937_64 rng(config.seed ^ 0xd1b54a32d192ed03ULL);
  const auto batch_size = static_cast<std::size_t>(config.batch_size);

  std::optional<MetricsCsvWriter> csv;
  if (!config.output_dir.empty()) {
    std::error_code ec;
    fs::create_directories(config.output_dir, ec);
    if (ec || !fs::is_directory(config.output_dir)) {
      throw IoError("cannot create output directory " + config.output_dir);
    }
    csv.emplace((fs::path(config.output_dir) / "metrics.csv").string());
  }

  const auto clock_start = std::chrono::steady_clock::now();
  auto record = [&](int epoch, double lr) {
    MetricsRow row;
    row.epoch = epoch;
    row.lr = lr;
    // Regularizer terms are reported for ELR runs only.
    const TargetStore* t = use_elr ? &store : nullptr;
    auto tr = evaluate(model, data.train, data.augment, t, lambda, batch_size, LabelSource::Given);
    auto te = evaluate(model, data.test, data.augment, t, lambda, batch_size, LabelSource::True);
    row.train_ce = tr.ce;
    row.train_elr = tr.elr;
    row.train_total = tr.total;
    row.test_ce = te.ce;
    row.test_total = te.total;
    row.top1 = te.top1;
    row.top5 = te.top5;
    row.memorization = memorization_fractions(tr.predictions, data.train, epoch);
    if (config.record_wall_time) {
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start)
                        .count();
    }
    if (csv) csv->write(row);
    if (hooks.on_epoch) hooks.on_epoch(row);
    result.metrics.push_back(row);
  };

  record(0, lr_at_epoch(config.schedule, 0));

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at_epoch(config.schedule, epoch);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }
    model.set_mode(Mode::Train);
    std::size_t step = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size, ++step) {
      const auto rows = std::span<const std::size_t>(order).subspan(
          start, std::min(batch_size, order.size() - start));
      auto batch = gather(data.train, rows);
      const auto inputs = config.augment.enabled ? augment_batch(batch.images, data.augment, rng)
                                                 : normalize_batch(batch.images, data.augment);

      // first_pass is false only for the perturbed pass of a sharpness-aware
      // step; targets and running stats follow the unperturbed trajectory.
      auto loss_fn = [&](bool first_pass) {
        model.set_update_running_stats(first_pass);
        auto logits = model.forward(inputs);
        if (!use_elr) return cross_entropy(logits, batch.labels);
        if (first_pass) {
          NoGradGuard no_grad;
          store.update(batch.ids, softmax(logits));
        }
        return elr_loss(logits, batch.labels, store, batch.ids, lambda).total;
      };

      try {
        if (config.optimizer.sam_rho > 0.0) {
          sam_step(loss_fn, optimizer, lr);
        } else {
          optimizer.zero_grad();
          auto loss = loss_fn(true);
          backward(loss);
          sgd_step(optimizer, lr);
        }
      } catch (const NumericalError& e) {
        model.set_update_running_stats(true);
        throw NumericalError(std::string(e.what()) + " at " + step_context(epoch + 1, step));
      }
      model.set_update_running_stats(true);
    }
    record(epoch + 1, lr);
  }

  const auto& last = result.metrics.back();
  result.final_top1 = last.top1;
  result.final_top5 = last.top5;
  if (!config.output_dir.empty()) {
    const fs::path dir(config.output_dir);
    result.checkpoint_path = (dir / "checkpoint.bin").string();
    save_checkpoint(result.checkpoint_path, model, to_json(config), use_elr ? &store : nullptr);
    write_metrics_json((dir / "metrics.json").string(), result.metrics);
    std::ofstream summary(dir / "summary.json");
    if (!summary) throw IoError("cannot write summary in " + config.output_dir);
    summary << run_summary(result).dump(2) << '\n';
  }
  return result;
}

}  // namespace elr
