// Acceptance suite: one PASS/FAIL line per criterion. Criterion 9 needs the
// CIFAR-10 binaries in $ELR_CIFAR10_DIR and is skipped otherwise.
//
//   acceptance            run 1-9
//   acceptance 1 6        run only the listed criteria

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "elr/config.hpp"
#include "elr/data.hpp"
#include "elr/diagnostics.hpp"
#include "elr/errors.hpp"
#include "elr/experiment.hpp"
#include "elr/gradcheck.hpp"
#include "elr/loss.hpp"
#include "elr/ops.hpp"
#include "elr/optim.hpp"
#include "elr/schedule.hpp"
#include "test_util.hpp"

using namespace elr;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  enum Status { Pass, Fail, Skip } status = Fail;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) { return {ok ? Outcome::Pass : Outcome::Fail, std::move(detail)}; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// 1. conv2d -> batch_norm_2d -> relu -> pool -> matmul -> elr_loss (softmax inside).
Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t params = 0;
  std::set<std::string> ops;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    auto kernel = testing::random_tensor({3, 2, 3, 3}, rng);
    auto gamma = testing::random_tensor({3}, rng, true, 0.5, 1.5);
    auto beta = testing::random_tensor({3}, rng, true, -0.5, 0.5);
    auto w = testing::random_tensor({3, 4}, rng);
    auto b = testing::random_tensor({4}, rng);
    params = kernel.numel() + gamma.numel() + beta.numel() + w.numel() + b.numel();

    TargetStore store(4, 4, 0.7);
    for (int k = 0; k < 3; ++k) store.update(std::vector<std::int64_t>{0, 1, 2, 3},
                                             softmax(testing::random_tensor({4, 4}, rng, false, -2, 2)));
    const auto labels = testing::random_labels(4, 4, rng);
    const std::vector<std::int64_t> ids{0, 1, 2, 3};

    auto pre_relu = [&](const Tensor& x) {
      BatchNormState st(3);
      return batch_norm_2d(conv2d(x, kernel, {1, 1}), gamma, beta, st);
    };
    // Central differences are meaningless across the ReLU kink, so the input
    // is redrawn until every pre-activation clears it by 10 steps.
    auto x = testing::random_tensor({4, 2, 5, 5}, rng, false);
    while (testing::min_abs(pre_relu(x)) < 1e-2) x = testing::random_tensor({4, 2, 5, 5}, rng, false);

    auto loss = [&] {
      auto h = global_avg_pool(relu(pre_relu(x)));
      return elr_loss(add_bias(matmul(h, w), b), labels, store, ids, 3.0).total;
    };
    const auto tape = Tape::record(loss());
    for (const auto& rec : tape.records()) ops.insert(std::string(rec.op));
    auto r = check_gradients(loss, {kernel, gamma, beta, w, b}, {1e-3, seed});
    worst = std::max(worst, r.max_rel_error);
  }
  const double secs = seconds_since(t0);
  const bool has_ops = ops.count("conv2d") && ops.count("batch_norm_2d") && ops.count("relu") &&
                       ops.count("matmul") && ops.count("softmax");
  return verdict(worst < 1e-4 && params <= 1000 && has_ops && secs < 30.0,
                 "max rel error " + fmt("%.2e", worst) + " over 5 seeds, " + std::to_string(params) +
                     " params, " + fmt("%.2f", secs) + " s" + (has_ops ? "" : ", missing ops"));
}

// 2. Target recursion, lambda = 0 identity, clamp boundary.
Outcome elr_closed_forms() {
  double worst = 0.0;
  std::mt19937_64 rng(2);
  for (double beta : {0.7, 0.85, 0.9}) {
    auto p = softmax(testing::random_tensor({1, 10}, rng, false, -2, 2));
    TargetStore store(1, 10, beta);
    const std::vector<std::int64_t> id{0};
    for (int k = 1; k <= 50; ++k) {
      store.update(id, p);
      const double factor = 1.0 - std::pow(beta, k);
      for (std::size_t j = 0; j < 10; ++j) worst = std::max(worst, std::abs(store.target(0)[j] - factor * p[j]));
    }
  }
  bool identical = true;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 r(seed);
    auto z = testing::random_tensor({5, 6}, r, true, -4, 4);
    const auto labels = testing::random_labels(5, 6, r);
    TargetStore store(5, 6, 0.7);
    store.update(std::vector<std::int64_t>{0, 1, 2, 3, 4}, softmax(testing::random_tensor({5, 6}, r, false)));
    auto v = elr_loss(z, labels, store, std::vector<std::int64_t>{4, 3, 2, 1, 0}, 0.0);
    identical = identical && v.total.item() == cross_entropy(z, labels).item();
  }
  TargetStore one_hot(1, 5, 0.7);
  one_hot.mutable_values()[2] = 1.0;
  auto clamped = elr_loss(Tensor::from({1, 5}, {0, 0, 900, 0, 0}), std::vector<int>{2}, one_hot,
                          std::vector<std::int64_t>{0}, 3.0);
  const bool finite = std::isfinite(clamped.total.item()) && std::isfinite(clamped.elr_part);
  return verdict(worst <= 1e-12 && identical && finite,
                 "recursion error " + fmt("%.1e", worst) + ", lambda=0 " + (identical ? "bit-exact" : "differs") +
                     ", clamp elr part " + fmt("%.4f", clamped.elr_part));
}

// 3. Cosine endpoints and midpoint; multistep at every epoch 0-150.
Outcome scheduler_exactness() {
  ScheduleConfig cos;
  cos.kind = ScheduleKind::Cosine;
  const double e0 = std::abs(cosine_lr(cos, 0) - 0.02);
  const double e10 = std::abs(cosine_lr(cos, 10) - 0.001);
  const double e5 = std::abs(cosine_lr(cos, 5) - 0.0105);
  double worst_ms = 0.0;
  for (double factor : {10.0, 100.0}) {
    ScheduleConfig ms;
    ms.decay_factor = factor;
    for (int epoch = 0; epoch <= 150; ++epoch) {
      const double expected = epoch < 40 ? 0.02 : epoch < 80 ? 0.02 / factor : 0.02 / (factor * factor);
      worst_ms = std::max(worst_ms, std::abs(multistep_lr(ms, epoch) - expected) / expected);
    }
  }
  const double worst_cos = std::max({e0, e10, e5});
  return verdict(worst_cos <= 1e-12 && worst_ms <= 1e-12,
                 "cosine error " + fmt("%.1e", worst_cos) + ", multistep relative error " + fmt("%.1e", worst_ms));
}

// 4. Exact flip counts, no self flips, chi-square uniformity over off-classes.
Outcome noise_accounting() {
  const std::size_t n = 10000;
  const int k = 10;
  LabeledDataset ds;
  ds.num_classes = k;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % k);
    ds.given_labels.push_back(y);
    ds.true_labels.push_back(y);
    ds.flip_mask.push_back(false);
    ds.sample_ids.push_back(static_cast<std::int64_t>(i));
  }
  ds.images = Tensor::zeros({n, 1, 1, 1});
  bool ok = true;
  std::string detail;
  for (double eps : {0.1, 0.15, 0.2}) {
    auto noisy = inject_symmetric_noise(ds, {eps, 12345});
    const auto expected = static_cast<std::size_t>(std::llround(eps * static_cast<double>(n)));
    std::size_t flips = 0, self = 0;
    std::map<std::pair<int, int>, double> cells;
    std::vector<double> per_true(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (noisy.given_labels[i] != ds.true_labels[i]) ++flips;
      if (noisy.flip_mask[i] && noisy.given_labels[i] == noisy.true_labels[i]) ++self;
      if (!noisy.flip_mask[i]) continue;
      cells[{noisy.true_labels[i], noisy.given_labels[i]}] += 1;
      per_true[noisy.true_labels[i]] += 1;
    }
    double stat = 0.0;
    for (int t = 0; t < k; ++t)
      for (int g = 0; g < k; ++g) {
        if (g == t) continue;
        const double e = per_true[t] / (k - 1);
        stat += std::pow(cells[{t, g}] - e, 2) / e;
      }
    const double p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(k * (k - 2)), stat));
    ok = ok && flips == expected && noisy.flipped_count() == expected && self == 0 && p > 0.01;
    detail += fmt("eps %.2f: ", eps) + std::to_string(flips) + "/" + std::to_string(expected) +
              " flips, p " + fmt("%.3f", p) + "; ";
  }
  detail.resize(detail.size() - 2);
  return verdict(ok, detail);
}

// 5. The three memorization fractions sum to one.
Outcome memorization_identity() {
  std::mt19937_64 rng(5);
  double worst = 0.0;
  int informative = 0;
  bool bounded = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = std::uniform_int_distribution<int>(2, 12)(rng);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 200)(rng);
    LabeledDataset ds;
    ds.num_classes = k;
    ds.true_labels = testing::random_labels(n, k, rng);
    ds.given_labels = ds.true_labels;
    ds.flip_mask.assign(n, false);
    for (std::size_t i = 0; i < n; ++i) ds.sample_ids.push_back(static_cast<std::int64_t>(i));
    ds.images = Tensor::zeros({n, 1, 1, 1});
    const double rate = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    ds = inject_symmetric_noise(ds, {rate, static_cast<std::uint64_t>(trial)});
    const auto preds = testing::random_labels(n, k, rng);
    const auto r = memorization_fractions(preds, ds);
    if (r.empty()) continue;
    ++informative;
    worst = std::max(worst, std::abs(r.frac_correct + r.frac_memorized + r.frac_other - 1.0));
    for (double f : {r.frac_correct, r.frac_memorized, r.frac_other}) bounded = bounded && f >= 0.0 && f <= 1.0;
  }
  return verdict(worst <= 1e-12 && bounded && informative > 900,
                 "max |sum - 1| " + fmt("%.1e", worst) + " over " + std::to_string(informative) +
                     " pairs with flipped samples");
}

// 6. Desk-scale early-learning trend over 3 seeds.
Outcome early_learning() {
  std::vector<double> ce_mem, elr_mem, ce_top1, elr_top1;
  double slowest = 0.0;
  for (std::uint64_t s = 0; s < 3; ++s) {
    for (LossKind kind : {LossKind::CrossEntropy, LossKind::Elr}) {
      auto config = desk_scale_config();
      config.dataset.synthetic.seed = s;
      config.noise.seed = s + 100;
      config.split_seed = s + 200;
      config.seed = s;
      if (kind == LossKind::CrossEntropy) config.loss = {LossKind::CrossEntropy, 0.0, 0.7};
      const auto t0 = Clock::now();
      auto r = run_experiment(config);
      slowest = std::max(slowest, seconds_since(t0));
      const auto& last = r.metrics.back();
      (kind == LossKind::Elr ? elr_mem : ce_mem).push_back(last.memorization.frac_memorized);
      (kind == LossKind::Elr ? elr_top1 : ce_top1).push_back(last.top1);
      std::printf("  seed %llu %-3s  memorized %.3f  top1 %.3f\n", static_cast<unsigned long long>(s),
                  kind == LossKind::Elr ? "elr" : "ce", last.memorization.frac_memorized, last.top1);
      std::fflush(stdout);
    }
  }
  const double cm = median3(ce_mem), em = median3(elr_mem);
  const double ct = median3(ce_top1), et = median3(elr_top1);
  const bool ok = cm >= 0.5 && em <= 0.5 * cm && et - ct >= 0.05 && slowest < 300.0;
  return verdict(ok, "median memorized ce " + fmt("%.3f", cm) + " elr " + fmt("%.3f", em) + ", median top1 ce " +
                         fmt("%.3f", ct) + " elr " + fmt("%.3f", et) + ", slowest run " + fmt("%.0f", slowest) + " s");
}

// 7. Sharpness-aware step mechanics.
Outcome sam_mechanics() {
  double worst_norm = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    auto a = testing::random_tensor({4, 3}, rng);
    auto b = testing::random_tensor({5}, rng);
    const double rho = 0.01 + 0.02 * static_cast<double>(seed);
    OptimizerState st({a, b}, {0.9, 1e-3, rho});
    const std::vector<double> a0(a.data().begin(), a.data().end()), b0(b.data().begin(), b.data().end());
    double sq = 0.0;
    sam_step(
        [&](bool first) {
          if (!first) {
            for (std::size_t i = 0; i < a0.size(); ++i) sq += std::pow(a[i] - a0[i], 2);
            for (std::size_t i = 0; i < b0.size(); ++i) sq += std::pow(b[i] - b0[i], 2);
          }
          return add(sum(mul(mul(a, a), a)), sum(mul(b, b)));
        },
        st, 0.1);
    worst_norm = std::max(worst_norm, std::abs(std::sqrt(sq) - rho));
  }

  std::mt19937_64 rng(77);
  auto w1 = testing::random_tensor({6}, rng);
  auto w2 = Tensor::from({6}, std::vector<double>(w1.data().begin(), w1.data().end()), true);
  OptimizerState s1({w1}, {0.9, 1e-3, 0.0}), s2({w2}, {0.9, 1e-3, 0.0});
  for (int it = 0; it < 50; ++it) {
    sam_step([&](bool) { return sum(mul(mul(w1, w1), mul(w1, w1))); }, s1, 0.01);
    s2.zero_grad();
    backward(sum(mul(mul(w2, w2), mul(w2, w2))));
    sgd_step(s2, 0.01);
  }
  bool identical = true;
  for (std::size_t i = 0; i < 6; ++i) identical = identical && w1[i] == w2[i];

  auto z = Tensor::from({3}, {0.0, 0.0, 0.0}, true);
  OptimizerState sz({z}, {0.9, 0.0, 0.1});
  int calls = 0;
  sam_step([&](bool) { ++calls; return sum(mul(z, z)); }, sz, 0.1);
  const bool guard = calls == 1 && z[0] == 0.0 && z[1] == 0.0 && z[2] == 0.0 && !sz.sam_in_flight();

  return verdict(worst_norm <= 1e-10 && identical && guard,
                 "perturbation norm error " + fmt("%.1e", worst_norm) + ", rho=0 " +
                     (identical ? "bit-identical" : "differs") + ", zero-gradient guard " +
                     (guard ? "ok" : "broken"));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// 8. Byte-identical metrics CSV for repeated runs.
Outcome determinism() {
  const auto root = fs::temp_directory_path() / "elr_acceptance_determinism";
  fs::remove_all(root);
  auto desk = desk_scale_config();
  desk.epochs = 10;
  // Exercises augmentation, batch norm and the two-pass step as well.
  ExperimentConfig res;
  res.name = "resnet-sam";
  res.dataset.synthetic = SyntheticSpec{4, 20, 3, 8, 8, 0.15, 3};
  res.noise = {0.2, 1};
  res.augment.enabled = true;
  res.augment.crop_pad = 2;
  res.model.base_channels = 4;
  res.loss = {LossKind::Elr, 3.0, 0.7};
  res.optimizer.sam_rho = 0.05;
  res.epochs = 3;
  res.batch_size = 16;
  res.seed = 9;

  bool ok = true;
  std::string detail;
  for (auto* config : {&desk, &res}) {
    std::string first;
    for (int rep = 0; rep < 2; ++rep) {
      config->output_dir = (root / (config->name + "-" + std::to_string(rep))).string();
      run_experiment(*config);
      const auto csv = slurp(fs::path(config->output_dir) / "metrics.csv");
      if (rep == 0) {
        first = csv;
      } else {
        const bool same = !first.empty() && csv == first;
        ok = ok && same;
        detail += config->name + (same ? " identical" : " differs") + " (" + std::to_string(first.size()) +
                  " bytes); ";
      }
    }
  }
  fs::remove_all(root);
  detail.resize(detail.size() - 2);
  return verdict(ok, detail);
}

// 9. CIFAR-10 subset with a reduced ResNet.
Outcome cifar_trend() {
  const char* dir = std::getenv("ELR_CIFAR10_DIR");
  if (!dir) return {Outcome::Skip, "set ELR_CIFAR10_DIR to the cifar-10-batches-bin directory"};
  ExperimentConfig c;
  c.name = "cifar10-subset";
  c.dataset.kind = DatasetKind::Cifar10;
  for (const char* f : {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin",
                        "data_batch_5.bin", "test_batch.bin"}) {
    c.dataset.paths.push_back((fs::path(dir) / f).string());
  }
  c.dataset.subset = 10000;
  c.noise = {0.2, 0};
  c.augment.enabled = true;
  c.model = ModelConfig{};  // [1,1,1,1], 16 base channels
  c.schedule.kind = ScheduleKind::Cosine;
  c.epochs = 30;
  c.batch_size = 128;
  auto ce = c;
  ce.loss = {LossKind::CrossEntropy, 0.0, 0.7};
  auto elr = c;
  elr.loss = {LossKind::Elr, 3.0, 0.7};
  const double ce_top1 = run_experiment(ce).final_top1;
  const double elr_top1 = run_experiment(elr).final_top1;
  return verdict(elr_top1 - ce_top1 >= 0.05, "top1 ce " + fmt("%.3f", ce_top1) + " elr " + fmt("%.3f", elr_top1));
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradient_correctness},
      {"ELR closed forms", elr_closed_forms},
      {"scheduler exactness", scheduler_exactness},
      {"noise accounting", noise_accounting},
      {"memorization identity", memorization_identity},
      {"early-learning reproduction", early_learning},
      {"SAM mechanics", sam_mechanics},
      {"determinism", determinism},
      {"CIFAR-10 trend (optional)", cifar_trend},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(number)) continue;
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {Outcome::Fail, std::string("threw: ") + e.what()};
    }
    const char* tag = out.status == Outcome::Pass ? "PASS" : out.status == Outcome::Skip ? "SKIP" : "FAIL";
    std::printf("%s %d %s: %s\n", tag, number, criteria[i].first, out.detail.c_str());
    std::fflush(stdout);
    if (out.status == Outcome::Fail) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
