#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "elr/errors.hpp"
#include "elr/gradcheck.hpp"
#include "elr/loss.hpp"
#include "elr/ops.hpp"
#include "test_util.hpp"

using namespace elr;
using elr::testing::random_tensor;

namespace {

// Rows drawn uniformly from the simplex, scaled by a random mass in [0, 1].
void fill_random_targets(TargetStore& store, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto k = store.num_classes();
  auto v = store.mutable_values();
  for (std::size_t i = 0; i < store.num_samples(); ++i) {
    double total = 0;
    for (std::size_t j = 0; j < k; ++j) total += v[i * k + j] = e(rng);
    const double mass = u(rng);
    for (std::size_t j = 0; j < k; ++j) v[i * k + j] *= mass / total;
  }
}

}  // namespace

TEST_CASE("cross_entropy") {
  const std::vector<int> zero{0};
  CHECK(cross_entropy(Tensor::zeros({1, 4}), zero).item() == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  CHECK(std::abs(cross_entropy(Tensor::zeros({1, 4}), zero).item() - 1.386294) < 1e-6);
  CHECK(cross_entropy(Tensor::from({1, 3}, {20, 0, 0}), zero).item() < 1e-6);
  CHECK(std::abs(cross_entropy(Tensor::from({1, 2}, {0, std::log(3.0)}), zero).item() - 1.386294) < 1e-6);
  CHECK(std::isfinite(cross_entropy(Tensor::from({1, 2}, {-1000, 1000}), zero).item()));
  const std::vector<int> bad{4};
  CHECK_THROWS_AS(cross_entropy(Tensor::zeros({1, 4}), bad), ContractError);
  const std::vector<int> two{0, 1};
  CHECK_THROWS_AS(cross_entropy(Tensor::zeros({1, 4}), two), DimensionError);
}

TEST_CASE("elr_loss examples") {
  const std::vector<int> label{0};
  const std::vector<std::int64_t> id{0};

  SUBCASE("lambda zero is the cross-entropy") {
    std::mt19937_64 rng(1);
    TargetStore store(3, 5, 0.7);
    fill_random_targets(store, rng);
    auto z = random_tensor({3, 5}, rng);
    const std::vector<int> labels{1, 4, 0};
    const std::vector<std::int64_t> ids{2, 0, 1};
    auto v = elr_loss(z, labels, store, ids, 0.0);
    CHECK(v.total.item() == cross_entropy(z, labels).item());
    CHECK(v.total.item() == v.ce_part);
  }
  SUBCASE("uniform p against a one-hot target") {
    TargetStore store(1, 10, 0.7);
    store.mutable_values()[3] = 1.0;
    auto v = elr_loss(Tensor::zeros({1, 10}), label, store, id, 3.0);
    CHECK(std::abs(3.0 * v.elr_part - (-0.316082)) < 1e-6);
    CHECK(v.total.item() == doctest::Approx(std::log(10.0) + 3.0 * std::log(0.9)).epsilon(1e-14));
    CHECK(v.lambda == 3.0);
  }
  SUBCASE("inner product at one is clamped") {
    TargetStore store(1, 3, 0.7);
    store.mutable_values()[0] = 1.0;
    auto v = elr_loss(Tensor::from({1, 3}, {800, 0, 0}), label, store, id, 3.0);
    CHECK(std::abs(v.elr_part - std::log(1e-4)) < 1e-9);
    CHECK(std::abs(v.elr_part - (-9.2103)) < 1e-4);
    CHECK(std::isfinite(v.total.item()));
  }
  SUBCASE("unknown sample id") {
    TargetStore store(2, 3, 0.7);
    const std::vector<std::int64_t> missing{2};
    CHECK_THROWS_AS(elr_loss(Tensor::zeros({1, 3}), label, store, missing, 1.0), ContractError);
  }
}

TEST_CASE("target updates") {
  std::mt19937_64 rng(2);
  auto p = softmax(random_tensor({2, 4}, rng, false));
  const std::vector<std::int64_t> ids{1, 0};

  SUBCASE("beta one is a fixed point") {
    TargetStore store(2, 4, 1.0);
    fill_random_targets(store, rng);
    const std::vector<double> before(store.values().begin(), store.values().end());
    store.update(ids, p);
    CHECK(std::equal(before.begin(), before.end(), store.values().begin()));
  }
  SUBCASE("single step from zero") {
    TargetStore store(2, 4, 0.7);
    store.update(ids, p);
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(store.target(1)[j] == doctest::Approx(0.3 * p[j]).epsilon(1e-15));
      CHECK(store.target(0)[j] == doctest::Approx(0.3 * p[4 + j]).epsilon(1e-15));
    }
  }
  SUBCASE("three steps follow the geometric series") {
    TargetStore store(2, 4, 0.7);
    for (int k = 0; k < 3; ++k) store.update(ids, p);
    const double factor = 1.0 - std::pow(0.7, 3);
    CHECK(factor == doctest::Approx(0.657));
    for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(store.target(1)[j] - factor * p[j]) <= 1e-12);
  }
  SUBCASE("entries stay in [0,1] and row sums approach one") {
    TargetStore store(2, 4, 0.7);
    for (int k = 0; k < 60; ++k) {
      store.update(ids, softmax(random_tensor({2, 4}, rng, false, -3, 3)));
      for (double v : store.values()) CHECK((v >= 0.0 && v <= 1.0));
      for (std::int64_t i : {0, 1}) {
        const auto t = store.target(i);
        const double s = std::accumulate(t.begin(), t.end(), 0.0);
        CHECK(s <= 1.0 + 1e-12);
      }
    }
    const auto t = store.target(0);
    CHECK(std::accumulate(t.begin(), t.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-8));
  }
  SUBCASE("order independent across distinct ids") {
    TargetStore a(5, 4, 0.6), b(5, 4, 0.6);
    auto probs = softmax(random_tensor({5, 4}, rng, false));
    const std::vector<std::int64_t> forward_ids{0, 1, 2, 3, 4};
    a.update(forward_ids, probs);
    // same rows presented in reverse order with reversed ids
    std::vector<double> rev;
    for (int r = 4; r >= 0; --r) rev.insert(rev.end(), probs.data().begin() + r * 4, probs.data().begin() + r * 4 + 4);
    const std::vector<std::int64_t> reverse_ids{4, 3, 2, 1, 0};
    b.update(reverse_ids, Tensor::from({5, 4}, rev));
    CHECK(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  }
  SUBCASE("invalid input") {
    TargetStore store(2, 4, 0.7);
    const std::vector<std::int64_t> bad{0, 7};
    CHECK_THROWS_AS(store.update(bad, p), ContractError);
    CHECK_THROWS_AS(store.update(ids, Tensor::full({2, 4}, 0.5)), ContractError);
    CHECK_THROWS_AS(TargetStore(2, 4, 1.5), ContractError);
  }
}

TEST_CASE("elr_loss gradients match finite differences") {
  for (double lambda : {0.0, 3.0, 7.0}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      CAPTURE(lambda);
      CAPTURE(seed);
      std::mt19937_64 rng(seed);
      TargetStore store(6, 5, 0.7);
      fill_random_targets(store, rng);
      auto z = random_tensor({4, 5}, rng, true, -2, 2);
      const auto labels = elr::testing::random_labels(4, 5, rng);
      const std::vector<std::int64_t> ids{5, 0, 3, 2};
      auto r = check_gradients([&] { return elr_loss(z, labels, store, ids, lambda).total; }, {z},
                               {1e-3, seed});
      CHECK(r.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("elr_loss gradient equals the analytic softmax-Jacobian composition") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed + 50);
    const std::size_t n = 3, k = 6;
    const double lambda = std::uniform_real_distribution<double>(0, 8)(rng);
    TargetStore store(n, k, 0.7);
    fill_random_targets(store, rng);
    auto z = random_tensor({n, k}, rng, true, -3, 3);
    const auto labels = elr::testing::random_labels(n, static_cast<int>(k), rng);
    const std::vector<std::int64_t> ids{0, 1, 2};
    backward(elr_loss(z, labels, store, ids, lambda).total);

    // softmax by hand
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> p(k);
      double mx = -1e300, s = 0;
      for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, z[i * k + j]);
      for (std::size_t j = 0; j < k; ++j) s += p[j] = std::exp(z[i * k + j] - mx);
      for (auto& v : p) v /= s;
      const auto t = store.target(static_cast<std::int64_t>(i));
      double pt = 0;
      for (std::size_t j = 0; j < k; ++j) pt += p[j] * t[j];
      // g = d/dp log(1 - <p,t>) = -t / (1 - <p,t>); through softmax: p * (g - <p,g>)
      std::vector<double> g(k);
      double pg = 0;
      for (std::size_t j = 0; j < k; ++j) pg += p[j] * (g[j] = -t[j] / (1.0 - pt));
      for (std::size_t j = 0; j < k; ++j) {
        const double ce = p[j] - (static_cast<int>(j) == labels[i] ? 1.0 : 0.0);
        const double expected = (ce + lambda * p[j] * (g[j] - pg)) / static_cast<double>(n);
        CHECK(std::abs(z.grad()[i * k + j] - expected) <= 1e-8);
      }
    }
  }
}

TEST_CASE("loss value invariants") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed + 900);
    TargetStore store(4, 3, 0.7);
    fill_random_targets(store, rng);
    const double lambda = std::uniform_real_distribution<double>(0, 10)(rng);
    auto z = random_tensor({4, 3}, rng, true, -5, 5);
    const auto labels = elr::testing::random_labels(4, 3, rng);
    const std::vector<std::int64_t> ids{3, 1, 0, 2};
    auto v = elr_loss(z, labels, store, ids, lambda);
    CHECK(v.elr_part <= 0.0);
    CHECK(std::abs(v.total.item() - (v.ce_part + lambda * v.elr_part)) <= 1e-12);
    CHECK(v.total.item() - v.ce_part <= 1e-12);
  }
}
