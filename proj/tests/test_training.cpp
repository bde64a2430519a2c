#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "memefuse/data.hpp"
#include "memefuse/encoders.hpp"
#include "memefuse/evaluation.hpp"
#include "memefuse/fusion.hpp"
#include "memefuse/training.hpp"

using namespace memefuse;

namespace {

bool close(double a, double b, double tol) { return std::fabs(a - b) < tol; }

std::vector<double> vec(std::span<const double> s) {
  return std::vector<double>(s.begin(), s.end());
}

ParameterSet single_param(const std::vector<double>& values) {
  ParameterSet ps;
  ps.add("w", Tensor::from_values({values.size()}, values, true));
  return ps;
}

GradientMap grads_for(const std::vector<double>& values) {
  GradientMap g;
  g.set("w", Tensor::from_values({values.size()}, values));
  return g;
}

SyntheticSpec easy_spec(std::size_t per_class, double joint_signal) {
  SyntheticSpec spec;
  spec.samples_per_class = {per_class, per_class, per_class};
  spec.text_dim = 8;
  spec.image_dim = 8;
  spec.text_len = 2;
  spec.image_len = 2;
  spec.joint_signal = joint_signal;
  spec.label_noise = 0.0;
  spec.cue_jitter = 0.2;
  spec.distractor_sigma = 0.35;
  return spec;
}

ModelConfig small_model(Strategy s) {
  ModelConfig cfg;
  cfg.strategy = s;
  cfg.text_input_dim = 8;
  cfg.image_input_dim = 8;
  cfg.model_dim = 16;
  cfg.heads = 2;
  cfg.mlp_hidden = 16;
  cfg.dropout_rate = 0.0;
  return cfg;
}

TrainConfig fast_train() {
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.micro_batch = 8;
  cfg.accumulation_steps = 1;
  cfg.max_epochs = 50;
  cfg.patience = 10;
  cfg.seed = 5;
  return cfg;
}

double test_macro_f1(const FusionModel& model,
                     const std::vector<TrainingExample>& examples) {
  std::vector<std::size_t> truth;
  std::vector<std::size_t> pred;
  for (const PredictionRecord& p : predict(model, examples)) {
    truth.push_back(p.true_label);
    pred.push_back(p.predicted);
  }
  return evaluate(truth, pred, kNumClasses).macro_f1;
}

const std::array<Strategy, 8> kAllStrategies = {
    Strategy::Early,    Strategy::Late,         Strategy::ClipStyle,
    Strategy::CrossT2I, Strategy::CrossI2T,     Strategy::Mcfm,
    Strategy::UnimodalText, Strategy::UnimodalImage};

}  // namespace

TEST_CASE("train config validation rejects bad fields") {
  TrainConfig good;
  CHECK_NOTHROW(good.validate());

  auto expect_reject = [](auto mutate) {
    TrainConfig cfg;
    mutate(cfg);
    CHECK_THROWS_AS(cfg.validate(), ContractError);
  };
  expect_reject([](TrainConfig& c) { c.learning_rate = 0.0; });
  expect_reject([](TrainConfig& c) { c.learning_rate = -1e-5; });
  expect_reject([](TrainConfig& c) { c.weight_decay = -0.01; });
  expect_reject([](TrainConfig& c) { c.micro_batch = 0; });
  expect_reject([](TrainConfig& c) { c.accumulation_steps = 0; });
  expect_reject([](TrainConfig& c) { c.warmup_fraction = 0.0; });
  expect_reject([](TrainConfig& c) { c.warmup_fraction = 1.0; });
  expect_reject([](TrainConfig& c) { c.max_epochs = 0; });
  expect_reject([](TrainConfig& c) { c.patience = 0; });
  expect_reject([](TrainConfig& c) { c.clip_max_norm = 0.0; });
  expect_reject([](TrainConfig& c) { c.beta1 = 1.0; });
  expect_reject([](TrainConfig& c) { c.beta2 = 1.0; });
  expect_reject([](TrainConfig& c) { c.eps = 0.0; });
}

TEST_CASE("lr schedule warms up linearly then decays to zero") {
  TrainConfig cfg;
  cfg.learning_rate = 2e-5;
  cfg.warmup_fraction = 0.10;

  CHECK(lr_at(0, 100, cfg) == 0.0);
  CHECK(close(lr_at(10, 100, cfg), 2e-5, 1e-20));
  CHECK(close(lr_at(55, 100, cfg), 1e-5, 1e-20));
  CHECK(lr_at(100, 100, cfg) == 0.0);

  SUBCASE("warmup increments are uniform") {
    for (std::size_t s = 1; s <= 10; ++s) {
      CHECK(close(lr_at(s, 100, cfg), 2e-5 * double(s) / 10.0, 1e-20));
    }
  }
  SUBCASE("decay is linear in the remaining steps") {
    for (std::size_t s = 11; s <= 100; ++s) {
      CHECK(close(lr_at(s, 100, cfg), 2e-5 * double(100 - s) / 90.0, 1e-20));
    }
  }
  SUBCASE("constant schedule holds the base rate after warmup") {
    cfg.schedule = LrSchedule::WarmupConstant;
    CHECK(close(lr_at(10, 100, cfg), 2e-5, 1e-20));
    CHECK(lr_at(55, 100, cfg) == 2e-5);
    CHECK(lr_at(100, 100, cfg) == 2e-5);
  }
  SUBCASE("contract errors") {
    CHECK_THROWS_AS(lr_at(0, 0, cfg), ContractError);
    CHECK_THROWS_AS(lr_at(101, 100, cfg), ContractError);
  }
}

TEST_CASE("lr schedule peaks exactly once at the warmup boundary") {
  TrainConfig cfg;
  cfg.learning_rate = 3e-4;
  cfg.warmup_fraction = 0.10;
  for (std::size_t total : {7u, 10u, 100u, 313u}) {
    std::vector<double> trace;
    for (std::size_t s = 1; s <= total; ++s) {
      trace.push_back(lr_at(s, total, cfg));
    }
    std::size_t peak_count = 0;
    std::size_t peak_step = 0;
    const double peak = *std::max_element(trace.begin(), trace.end());
    for (std::size_t i = 0; i < trace.size(); ++i) {
      if (trace[i] == peak) {
        ++peak_count;
        peak_step = i + 1;
      }
    }
    const auto warmup = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(0.10 * double(total))));
    CHECK(peak_count == 1);
    CHECK(peak_step == warmup);
    CHECK(peak == 3e-4);
  }
}

TEST_CASE("adamw leaves parameters unchanged at zero rate") {
  ParameterSet ps = single_param({0.5, -0.25, 2.0});
  GradientMap g = grads_for({1.0, -2.0, 0.5});
  OptimizerState state;
  TrainConfig cfg;
  adamw_step(ps, g, state, cfg, 0.0);
  CHECK(vec(ps.get("w").values()) == std::vector<double>{0.5, -0.25, 2.0});
  CHECK(state.step == 1);
  CHECK(state.moments.at("w").first[0] != 0.0);
}

TEST_CASE("adamw first step matches the closed form") {
  ParameterSet ps = single_param({0.0});
  GradientMap g = grads_for({1.0});
  OptimizerState state;
  TrainConfig cfg;
  cfg.weight_decay = 0.01;
  adamw_step(ps, g, state, cfg, 0.01);
  const double expected = -0.01 * (1.0 / (1.0 + 1e-8));
  CHECK(close(ps.get("w").at(0), expected, 1e-18));
}

TEST_CASE("adamw with zero decay matches a plain adam oracle") {
  Rng rng(314);
  const std::size_t n = 6;
  std::vector<double> theta(n);
  for (double& x : theta) x = rng.normal();

  ParameterSet ps = single_param(theta);
  OptimizerState state;
  TrainConfig cfg;
  cfg.weight_decay = 0.0;

  std::vector<double> m(n, 0.0), v(n, 0.0);
  std::vector<double> reference = theta;
  for (std::size_t t = 1; t <= 25; ++t) {
    std::vector<double> grad(n);
    for (double& x : grad) x = rng.normal();
    const double lr = 0.003 * (1.0 + 0.1 * double(t % 4));
    adamw_step(ps, grads_for(grad), state, cfg, lr);
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grad[i];
      v[i] = 0.999 * v[i] + 0.001 * grad[i] * grad[i];
      const double mhat = m[i] / (1.0 - std::pow(0.9, double(t)));
      const double vhat = v[i] / (1.0 - std::pow(0.999, double(t)));
      reference[i] -= lr * mhat / (std::sqrt(vhat) + 1e-8);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(close(ps.get("w").at(i), reference[i], 1e-12));
  }
}

TEST_CASE("adamw rejects inconsistent inputs") {
  ParameterSet ps = single_param({1.0, 2.0});
  OptimizerState state;
  TrainConfig cfg;
  GradientMap empty;
  CHECK_THROWS_AS(adamw_step(ps, empty, state, cfg, 0.01), ContractError);

  GradientMap wrong;
  wrong.set("w", Tensor::from_values({3}, {1.0, 2.0, 3.0}));
  CHECK_THROWS_AS(adamw_step(ps, wrong, state, cfg, 0.01), ContractError);

  GradientMap ok = grads_for({1.0, 1.0});
  CHECK_THROWS_AS(adamw_step(ps, ok, state, cfg, -0.01), ContractError);
}

TEST_CASE("gradient clipping rescales to the ceiling") {
  SUBCASE("the 3-4-5 example lands on the ceiling") {
    GradientMap g;
    g.set("a", Tensor::from_values({2}, {3.0, 4.0}));
    const double pre = clip_gradients(g, 1.0);
    CHECK(close(pre, 5.0, 1e-12));
    CHECK(close(g.at("a").at(0), 0.6, 1e-12));
    CHECK(close(g.at("a").at(1), 0.8, 1e-12));
    CHECK(close(g.global_l2_norm(), 1.0, 1e-12));
  }
  SUBCASE("gradients under the ceiling are untouched") {
    GradientMap g;
    g.set("a", Tensor::from_values({2}, {0.3, 0.4}));
    const double pre = clip_gradients(g, 1.0);
    CHECK(close(pre, 0.5, 1e-12));
    CHECK(vec(g.at("a").values()) == std::vector<double>{0.3, 0.4});
  }
  SUBCASE("post-clip norm never exceeds the ceiling") {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
      GradientMap g;
      for (int t = 0; t < 3; ++t) {
        std::vector<double> values(4);
        for (double& x : values) x = rng.normal() * 10.0;
        g.set("t" + std::to_string(t), Tensor::from_values({4}, values));
      }
      clip_gradients(g, 1.0);
      CHECK(g.global_l2_norm() <= 1.0 + 1e-9);
    }
  }
  SUBCASE("non-finite gradients are rejected") {
    GradientMap g;
    g.set("a", Tensor::from_values({2}, {1.0, HUGE_VAL}));
    CHECK_THROWS_AS(clip_gradients(g, 1.0), NumericalError);
  }
  SUBCASE("the ceiling must be positive") {
    GradientMap g;
    g.set("a", Tensor::from_values({1}, {1.0}));
    CHECK_THROWS_AS(clip_gradients(g, 0.0), ContractError);
  }
}

TEST_CASE("early stopper keeps the first best epoch on ties") {
  EarlyStopper stopper(5);
  CHECK(stopper.observe(0.5, 0.5, 1));
  CHECK(stopper.observe(0.6, 0.5, 2));
  for (std::size_t epoch = 3; epoch <= 6; ++epoch) {
    CHECK_FALSE(stopper.observe(0.6, 0.5, epoch));
    CHECK_FALSE(stopper.should_stop());
  }
  CHECK_FALSE(stopper.observe(0.6, 0.5, 7));
  CHECK(stopper.should_stop());
  CHECK(stopper.best_epoch() == 2);
  CHECK(stopper.best_macro_f1() == 0.6);
}

TEST_CASE("early stopper breaks f1 ties by accuracy without resetting") {
  EarlyStopper stopper(2);
  CHECK(stopper.observe(0.7, 0.60, 1));
  CHECK(stopper.observe(0.7, 0.65, 2));  // replaces the checkpoint
  CHECK(stopper.best_epoch() == 2);
  CHECK_FALSE(stopper.should_stop());
  CHECK_FALSE(stopper.observe(0.7, 0.65, 3));
  CHECK(stopper.should_stop());  // two epochs without an f1 improvement
  CHECK(stopper.best_epoch() == 2);
  CHECK(stopper.best_accuracy() == 0.65);

  CHECK_THROWS_AS(EarlyStopper(0), ContractError);
}

TEST_CASE("history csv renders full precision rows") {
  TrainHistory h;
  h.epochs.push_back(EpochStats{1, 0.5, 0.25, 1.0 / 3.0, 0.03125});
  h.epochs.push_back(EpochStats{2, 0.125, 0.75, 0.625, 0.015625});
  CHECK(history_csv(h) ==
        "epoch,train_loss,val_acc,val_macro_f1,lr\n"
        "1,0.5,0.25,0.33333333333333331,0.03125\n"
        "2,0.125,0.75,0.625,0.015625\n");
}

TEST_CASE("dataset conversion materializes inline and file features") {
  Dataset d = generate_synthetic(easy_spec(4, 0.0), 17);
  std::vector<TrainingExample> examples = to_examples(d);
  REQUIRE(examples.size() == d.records.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    CHECK(examples[i].id == d.records[i].id);
    CHECK(examples[i].label ==
          static_cast<std::size_t>(d.records[i].label));
    CHECK(examples[i].text.rows() == 2);
    CHECK(examples[i].text.cols() == 8);
    CHECK(examples[i].image.rows() == 2);
    CHECK(examples[i].image.cols() == 8);
    CHECK_FALSE(examples[i].text.requires_grad());
  }

  SUBCASE("a path reference loads the stored matrix") {
    const auto path =
        (std::filesystem::temp_directory_path() / "memefuse_feat_ref.txt")
            .string();
    Tensor stored = examples[0].text;
    save_feature_file(path, stored);
    Dataset with_path = d;
    with_path.records[1].features->text_vec = FeatureRef{std::nullopt, path};
    std::vector<TrainingExample> reloaded = to_examples(with_path);
    REQUIRE(reloaded[1].text.size() == stored.size());
    for (std::size_t i = 0; i < stored.size(); ++i) {
      CHECK(close(reloaded[1].text.values()[i], stored.values()[i], 1e-12));
    }
    std::filesystem::remove(path);
  }

  SUBCASE("records without features are rejected") {
    Dataset bad = d;
    bad.records[2].features.reset();
    bad.records[2].image_path = "somewhere.img";
    CHECK_THROWS_AS(to_examples(bad), DataError);
  }
}

TEST_CASE("predictions validate and cover every example") {
  Dataset d = generate_synthetic(easy_spec(3, 0.0), 23);
  std::vector<TrainingExample> examples = to_examples(d);
  Rng rng(4);
  FusionModel model(small_model(Strategy::Mcfm), rng);
  std::vector<PredictionRecord> preds = predict(model, examples);
  REQUIRE(preds.size() == examples.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    CHECK_NOTHROW(validate_prediction(preds[i], kNumClasses));
    CHECK(preds[i].id == examples[i].id);
    CHECK(preds[i].true_label == examples[i].label);
    CHECK_FALSE(preds[i].language.empty());
  }
}

TEST_CASE("training rejects empty splits") {
  Rng rng(4);
  FusionModel model(small_model(Strategy::Early), rng);
  Dataset d = generate_synthetic(easy_spec(2, 0.0), 29);
  std::vector<TrainingExample> examples = to_examples(d);
  TrainConfig cfg = fast_train();
  cfg.max_epochs = 1;
  CHECK_THROWS_AS(train(FusionModel(small_model(Strategy::Early), rng), {},
                        examples, cfg),
                  ContractError);
  CHECK_THROWS_AS(train(FusionModel(small_model(Strategy::Early), rng),
                        examples, {}, cfg),
                  ContractError);
}

TEST_CASE("training is bitwise deterministic for a fixed seed") {
  Dataset d = generate_synthetic(easy_spec(8, 0.0), 31);
  SplitResult split = split_dataset(d, {0.7, 0.15, 0.15}, 3);
  std::vector<TrainingExample> train_set = to_examples(split.train);
  std::vector<TrainingExample> val_set = to_examples(split.val);

  ModelConfig mc = small_model(Strategy::Mcfm);
  mc.dropout_rate = 0.3;
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.max_epochs = 3;
  cfg.patience = 10;
  cfg.seed = 42;

  auto run = [&]() {
    Rng rng(42);
    return train(FusionModel(mc, rng), train_set, val_set, cfg);
  };
  TrainResult a = run();
  TrainResult b = run();

  CHECK(history_csv(a.history) == history_csv(b.history));
  REQUIRE(a.history.epochs.size() == b.history.epochs.size());
  for (std::size_t e = 0; e < a.history.epochs.size(); ++e) {
    CHECK(a.history.epochs[e].train_loss == b.history.epochs[e].train_loss);
    CHECK(a.history.epochs[e].val_accuracy ==
          b.history.epochs[e].val_accuracy);
    CHECK(a.history.epochs[e].val_macro_f1 ==
          b.history.epochs[e].val_macro_f1);
    CHECK(a.history.epochs[e].lr == b.history.epochs[e].lr);
  }
  CHECK(a.history.best_epoch == b.history.best_epoch);
  const auto& pa = a.model.params().items();
  const auto& pb = b.model.params().items();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(vec(pa[i].second.values()) == vec(pb[i].second.values()));
  }
}

TEST_CASE("gradient accumulation matches the equivalent large batch") {
  Dataset d = generate_synthetic(easy_spec(8, 0.0), 37);
  std::vector<TrainingExample> train_set = to_examples(d);
  std::vector<TrainingExample> val_set(train_set.begin(),
                                       train_set.begin() + 6);

  for (Strategy s : kAllStrategies) {
    CAPTURE(strategy_name(s));
    ModelConfig mc = small_model(s);
    mc.dropout_rate = 0.3;

    TrainConfig accumulated;
    accumulated.learning_rate = 1e-3;
    accumulated.micro_batch = 4;
    accumulated.accumulation_steps = 2;
    accumulated.max_epochs = 2;
    accumulated.patience = 10;
    accumulated.seed = 9;
    TrainConfig flat = accumulated;
    flat.micro_batch = 8;
    flat.accumulation_steps = 1;

    Rng rng_a(7);
    TrainResult a =
        train(FusionModel(mc, rng_a), train_set, val_set, accumulated);
    Rng rng_b(7);
    TrainResult b = train(FusionModel(mc, rng_b), train_set, val_set, flat);

    const auto& pa = a.model.params().items();
    const auto& pb = b.model.params().items();
    REQUIRE(pa.size() == pb.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      auto va = pa[i].second.values();
      auto vb = pb[i].second.values();
      REQUIRE(va.size() == vb.size());
      for (std::size_t j = 0; j < va.size(); ++j) {
        worst = std::max(worst, std::fabs(va[j] - vb[j]));
      }
    }
    CHECK(worst <= 1e-9);
  }
}

TEST_CASE("training returns the parameters of the best epoch") {
  Dataset d = generate_synthetic(easy_spec(10, 0.0), 41);
  SplitResult split = split_dataset(d, {0.7, 0.15, 0.15}, 5);
  std::vector<TrainingExample> train_set = to_examples(split.train);
  std::vector<TrainingExample> val_set = to_examples(split.val);

  TrainConfig cfg = fast_train();
  cfg.max_epochs = 12;
  cfg.patience = 3;
  Rng rng(13);
  TrainResult result =
      train(FusionModel(small_model(Strategy::Mcfm), rng), train_set, val_set,
            cfg);

  REQUIRE(!result.history.epochs.empty());
  CHECK(result.history.stopping_epoch == result.history.epochs.size());

  EarlyStopper replay(cfg.patience);
  for (const EpochStats& e : result.history.epochs) {
    replay.observe(e.val_macro_f1, e.val_accuracy, e.epoch);
  }
  CHECK(result.history.best_epoch == replay.best_epoch());
  CHECK(result.history.best_val_macro_f1 == replay.best_macro_f1());

  std::vector<std::size_t> truth;
  std::vector<std::size_t> pred;
  for (const PredictionRecord& p : predict(result.model, val_set)) {
    truth.push_back(p.true_label);
    pred.push_back(p.predicted);
  }
  const EvalSummary s = evaluate(truth, pred, kNumClasses);
  CHECK(s.macro_f1 == result.history.best_val_macro_f1);
  CHECK(s.accuracy == result.history.best_val_accuracy);
}

TEST_CASE("non-finite losses abort with epoch and step context") {
  Dataset d = generate_synthetic(easy_spec(4, 0.0), 43);
  std::vector<TrainingExample> examples = to_examples(d);
  std::vector<TrainingExample> train_set(examples.begin(),
                                         examples.begin() + 8);
  std::vector<TrainingExample> val_set(examples.begin() + 8, examples.end());

  TrainConfig cfg;
  cfg.learning_rate = 1e200;
  cfg.micro_batch = 4;
  cfg.accumulation_steps = 1;
  cfg.max_epochs = 3;
  Rng rng(19);
  CHECK_THROWS_WITH_AS(
      train(FusionModel(small_model(Strategy::Early), rng), train_set,
            val_set, cfg),
      doctest::Contains("training aborted at epoch"), NumericalError);
}

TEST_CASE("every strategy separates marginal-signal data") {
  Dataset d = generate_synthetic(easy_spec(60, 0.0), 11);
  SplitResult split = split_dataset(d, {0.7, 0.15, 0.15}, 3);
  std::vector<TrainingExample> train_set = to_examples(split.train);
  std::vector<TrainingExample> val_set = to_examples(split.val);

  std::uint64_t model_seed = 100;
  for (Strategy s : kAllStrategies) {
    CAPTURE(strategy_name(s));
    Rng rng(model_seed++);
    TrainResult result = train(FusionModel(small_model(s), rng), train_set,
                               val_set, fast_train());
    CHECK(result.history.best_val_macro_f1 > 0.9);
    CHECK(result.history.stopping_epoch <= 50);
  }
}

TEST_CASE("joint-only signal defeats unimodal models but not fusion") {
  Dataset d = generate_synthetic(easy_spec(150, 1.0), 21);
  SplitResult split = split_dataset(d, {0.7, 0.15, 0.15}, 7);
  std::vector<TrainingExample> train_set = to_examples(split.train);
  std::vector<TrainingExample> val_set = to_examples(split.val);
  std::vector<TrainingExample> test_set = to_examples(split.test);

  TrainConfig cfg = fast_train();
  cfg.max_epochs = 120;
  cfg.patience = 15;

  Rng rng_fusion(51);
  TrainResult fusion = train(FusionModel(small_model(Strategy::Mcfm),
                                         rng_fusion),
                             train_set, val_set, cfg);
  const double fusion_f1 = test_macro_f1(fusion.model, test_set);
  CHECK(fusion_f1 > 0.90);

  TrainConfig uni_cfg = fast_train();
  uni_cfg.max_epochs = 30;
  Rng rng_uni(52);
  TrainResult unimodal =
      train(FusionModel(small_model(Strategy::UnimodalText), rng_uni),
            train_set, val_set, uni_cfg);
  CHECK(test_macro_f1(unimodal.model, test_set) <= 0.40);

  SUBCASE("zeroing a modality collapses the fused model") {
    std::vector<TrainingExample> blanked = test_set;
    for (TrainingExample& ex : blanked) {
      ex.image = Tensor::zeros(ex.image.shape());
    }
    const double degraded_f1 = test_macro_f1(fusion.model, blanked);
    CHECK(fusion_f1 - degraded_f1 > 0.1);
  }
}

TEST_CASE("the dataset overload mirrors the example-level entry point") {
  Dataset d = generate_synthetic(easy_spec(6, 0.0), 47);
  SplitResult split = split_dataset(d, {0.7, 0.15, 0.15}, 9);
  TrainConfig cfg = fast_train();
  cfg.max_epochs = 2;
  Rng rng_a(7);
  TrainResult via_dataset =
      train(FusionModel(small_model(Strategy::Early), rng_a), split.train,
            split.val, cfg);
  Rng rng_b(7);
  TrainResult via_examples =
      train(FusionModel(small_model(Strategy::Early), rng_b),
            to_examples(split.train), to_examples(split.val), cfg);
  CHECK(history_csv(via_dataset.history) ==
        history_csv(via_examples.history));
}
