#include <doctest.h>

#include <cmath>

#include "memefuse/gradcheck.hpp"
#include "memefuse/losses.hpp"
#include "memefuse/rng.hpp"

using namespace memefuse;

namespace {

bool close(double a, double b, double tol) { return std::fabs(a - b) < tol; }

// Straight-line evaluation of the stated focal formula, no graph machinery.
double focal_oracle(const std::vector<double>& logits, std::size_t y,
                    const LossConfig& cfg) {
  const std::size_t k = logits.size();
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double denom = 0.0;
  for (double v : logits) denom += std::exp(v - mx);
  std::vector<double> p(k), lp(k);
  for (std::size_t i = 0; i < k; ++i) {
    lp[i] = logits[i] - mx - std::log(denom);
    p[i] = std::exp(lp[i]);
  }
  std::vector<double> q = smooth_labels(y, cfg.smoothing, k);
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double mod = cfg.gamma == 0.0 ? 1.0 : std::pow(1.0 - p[i], cfg.gamma);
    s += q[i] * mod * lp[i];
  }
  const double w = cfg.class_weights ? (*cfg.class_weights)[y] : 1.0;
  return -cfg.alpha * w * s;
}

}  // namespace

TEST_CASE("smooth_labels: frozen example and exact sum") {
  auto q = smooth_labels(0, 0.1, 3);
  CHECK(close(q[0], 0.93333, 1e-5));
  CHECK(close(q[1], 0.03333, 1e-5));
  CHECK(close(q[2], 0.03333, 1e-5));

  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + rng.uniform_index(9);
    const std::size_t y = rng.uniform_index(k);
    const double eps = rng.uniform() * 0.999;
    auto v = smooth_labels(y, eps, k);
    double s = 0.0;
    for (double x : v) s += x;
    CHECK(s == 1.0);
    for (std::size_t i = 0; i < k; ++i) {
      if (i != y) CHECK(close(v[i], eps / static_cast<double>(k), 1e-15));
    }
    // zero smoothing degrades to one-hot
    auto hot = smooth_labels(y, 0.0, k);
    for (std::size_t i = 0; i < k; ++i) {
      CHECK(hot[i] == (i == y ? 1.0 : 0.0));
    }
  }

  CHECK_THROWS_AS(smooth_labels(3, 0.1, 3), ContractError);
  CHECK_THROWS_AS(smooth_labels(0, 1.0, 3), ContractError);
  CHECK_THROWS_AS(smooth_labels(0, -0.1, 3), ContractError);
  CHECK_THROWS_AS(smooth_labels(0, 0.1, 1), ContractError);
}

TEST_CASE("inverse_frequency_weights: frozen triple and identity") {
  auto w = inverse_frequency_weights({811, 773, 688});
  CHECK(close(w[0], 0.93382, 1e-5));
  CHECK(close(w[1], 0.97974, 1e-5));
  CHECK(close(w[2], 1.10078, 1e-5));

  // Balanced counts give unit weights.
  for (double v : inverse_frequency_weights({100, 100, 100})) {
    CHECK(v == 1.0);
  }

  // sum_k (n_k / N) * w_k == 1 for random count vectors.
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng.uniform_index(5);
    std::vector<std::size_t> counts(k);
    std::size_t total = 0;
    for (auto& c : counts) {
      c = 1 + rng.uniform_index(2000);
      total += c;
    }
    auto wt = inverse_frequency_weights(counts);
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      s += (static_cast<double>(counts[i]) / static_cast<double>(total)) *
           wt[i];
    }
    CHECK(close(s, 1.0, 1e-12));
  }

  CHECK_THROWS_AS(inverse_frequency_weights({5, 0, 3}), ContractError);
  CHECK_THROWS_AS(inverse_frequency_weights({5}), ContractError);
}

TEST_CASE("focal_loss: frozen hand value") {
  // Logits chosen so softmax gives exactly (0.5, 0.25, 0.25).
  Tensor logits = Tensor::from_values(
      {3}, {std::log(0.5), std::log(0.25), std::log(0.25)});
  LossConfig cfg;
  cfg.alpha = 1.0;
  cfg.gamma = 2.0;
  cfg.smoothing = 0.0;
  Tensor loss = focal_loss(logits, 0, cfg);
  // (1 - 0.5)^2 * (-ln 0.5) = 0.25 * 0.693147 = 0.173287
  CHECK(close(loss.value(), 0.17329, 1e-5));
  CHECK(close(loss.value(), 0.25 * std::log(2.0), 1e-12));
}

TEST_CASE("focal_loss: corner case equals cross-entropy within 1e-12") {
  Rng rng(21);
  LossConfig corner;
  corner.alpha = 1.0;
  corner.gamma = 0.0;
  corner.smoothing = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> raw(3);
    for (double& v : raw) v = 8.0 * (rng.uniform() - 0.5);
    const std::size_t y = rng.uniform_index(3);
    Tensor logits = Tensor::from_values({3}, raw);
    const double focal = focal_loss(logits, y, corner).value();

    // Independent cross-entropy: -log softmax(logits)[y].
    double mx = std::max({raw[0], raw[1], raw[2]});
    double denom = 0.0;
    for (double v : raw) denom += std::exp(v - mx);
    const double ce = -(raw[y] - mx - std::log(denom));
    CHECK(close(focal, ce, 1e-12));
    CHECK(close(cross_entropy(logits, y).value(), ce, 1e-12));
  }
}

TEST_CASE("focal_loss: matches the straight-line oracle on random inputs") {
  Rng rng(33);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> raw(3);
    for (double& v : raw) v = 6.0 * (rng.uniform() - 0.5);
    const std::size_t y = rng.uniform_index(3);
    LossConfig cfg;
    cfg.alpha = 0.25 + rng.uniform() * 2.0;
    cfg.gamma = rng.uniform() * 4.0;
    cfg.smoothing = rng.uniform() * 0.5;
    if (trial % 2 == 0) {
      cfg.class_weights = std::vector<double>{0.9338, 0.9797, 1.1008};
    }
    Tensor logits = Tensor::from_values({3}, raw);
    const double got = focal_loss(logits, y, cfg).value();
    const double want = focal_oracle(raw, y, cfg);
    CHECK(close(got, want, 1e-12));
  }
}

TEST_CASE("focal_loss: scales linearly in alpha and weights the hard label") {
  Tensor logits = Tensor::from_values({3}, {0.2, -1.0, 0.7});
  LossConfig cfg;
  cfg.gamma = 2.0;
  cfg.smoothing = 0.1;
  cfg.alpha = 1.0;
  const double base = focal_loss(logits, 1, cfg).value();
  cfg.alpha = 3.5;
  CHECK(close(focal_loss(logits, 1, cfg).value(), 3.5 * base, 1e-12));

  cfg.alpha = 1.0;
  cfg.class_weights = std::vector<double>{1.0, 2.0, 1.0};
  CHECK(close(focal_loss(logits, 1, cfg).value(), 2.0 * base, 1e-12));
  // Weight of a different class leaves the label-1 loss untouched.
  cfg.class_weights = std::vector<double>{7.0, 1.0, 7.0};
  CHECK(close(focal_loss(logits, 1, cfg).value(), base, 1e-12));
}

TEST_CASE("focal_loss: focusing damps confident examples more than CE does") {
  LossConfig focal;
  focal.gamma = 2.0;
  focal.smoothing = 0.0;
  // p_y = 0.9 (confident) vs p_y = 0.4 (hard): the focal/CE ratio must be
  // far smaller for the confident sample.
  auto make = [](double py) {
    const double rest = (1.0 - py) / 2.0;
    return Tensor::from_values(
        {3}, {std::log(py), std::log(rest), std::log(rest)});
  };
  Tensor confident = make(0.9), hard = make(0.4);
  const double ratio_confident =
      focal_loss(confident, 0, focal).value() /
      cross_entropy(confident, 0).value();
  const double ratio_hard =
      focal_loss(hard, 0, focal).value() / cross_entropy(hard, 0).value();
  CHECK(close(ratio_confident, 0.01, 1e-12));  // (1-0.9)^2
  CHECK(close(ratio_hard, 0.36, 1e-12));       // (1-0.4)^2
  CHECK(ratio_confident < ratio_hard);
}

TEST_CASE("focal_loss: gradient check across configurations") {
  Rng rng(55);
  for (double gamma : {0.0, 0.5, 2.0}) {
    for (double smoothing : {0.0, 0.1}) {
      ParameterSet ps;
      Tensor logits =
          ps.add("logits", Tensor::randn({3}, rng, 1.5, true));
      LossConfig cfg;
      cfg.gamma = gamma;
      cfg.smoothing = smoothing;
      cfg.alpha = 1.0;
      cfg.class_weights = std::vector<double>{0.93, 0.98, 1.1};
      auto f = [&] { return focal_loss(logits, 2, cfg); };
      GradCheckReport r = grad_check(f, ps, 1e-5, 1e-4);
      CHECK(r.passed);
    }
  }
}

TEST_CASE("focal_loss: contract violations") {
  Tensor logits = Tensor::from_values({3}, {0.0, 1.0, 2.0});
  LossConfig cfg;
  CHECK_THROWS_AS(focal_loss(logits, 3, cfg), ContractError);
  cfg.gamma = -1.0;
  CHECK_THROWS_AS(focal_loss(logits, 0, cfg), ContractError);
  cfg.gamma = 2.0;
  cfg.alpha = 0.0;
  CHECK_THROWS_AS(focal_loss(logits, 0, cfg), ContractError);
  cfg.alpha = 1.0;
  cfg.class_weights = std::vector<double>{1.0, 1.0};
  CHECK_THROWS_AS(focal_loss(logits, 0, cfg), ContractError);
  cfg.class_weights = std::vector<double>{1.0, -1.0, 1.0};
  CHECK_THROWS_AS(focal_loss(logits, 0, cfg), ContractError);
  cfg.class_weights.reset();

  Tensor bad = Tensor::from_values({3}, {0.0, HUGE_VAL, 0.0});
  CHECK_THROWS_AS(focal_loss(bad, 0, cfg), NumericalError);
}
