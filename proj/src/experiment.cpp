#include "memefuse/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "memefuse/errors.hpp"
#include "memefuse/evaluation.hpp"

namespace memefuse {

namespace {

std::string format_real(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::vector<Strategy> effective_strategies(const ComparisonSpec& spec) {
  if (!spec.strategies.empty()) return spec.strategies;
  return {Strategy::Early,        Strategy::Late,
          Strategy::ClipStyle,    Strategy::CrossT2I,
          Strategy::CrossI2T,     Strategy::Mcfm,
          Strategy::UnimodalText, Strategy::UnimodalImage};
}

}  // namespace

void ComparisonSpec::validate() const {
  if (seeds.empty()) {
    throw ContractError("ComparisonSpec: at least one seed is required");
  }
  double ratio_sum = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) {
      throw ContractError("ComparisonSpec: split ratios must be positive");
    }
    ratio_sum += r;
  }
  if (std::fabs(ratio_sum - 1.0) > 1e-9) {
    throw ContractError("ComparisonSpec: split ratios must sum to 1");
  }
  if (model.text_input_dim != data.text_dim ||
      model.image_input_dim != data.image_dim) {
    throw ContractError(
        "ComparisonSpec: model input dims must match the data dims");
  }
  ModelConfig probe = model;
  for (Strategy s : effective_strategies(*this)) {
    probe.strategy = s;
    probe.validate();
  }
  train.validate();
}

ComparisonSpec ComparisonSpec::desk_default() {
  ComparisonSpec spec;
  spec.data.samples_per_class = {600, 600, 600};
  spec.data.text_dim = 16;
  spec.data.image_dim = 16;
  spec.data.text_len = 6;
  spec.data.image_len = 6;
  spec.data.joint_signal = 0.7;
  spec.data.label_noise = 0.05;
  spec.data.cue_jitter = 0.3;
  spec.data.distractor_sigma = 0.8;

  spec.model.text_input_dim = 16;
  spec.model.image_input_dim = 16;
  spec.model.model_dim = 32;
  spec.model.heads = 4;
  spec.model.mlp_hidden = 32;
  spec.model.dropout_rate = 0.1;
  spec.model.co_attention_depth = 1;

  spec.train.learning_rate = 3e-3;
  spec.train.weight_decay = 0.01;
  spec.train.micro_batch = 8;
  spec.train.accumulation_steps = 1;
  spec.train.warmup_fraction = 0.10;
  spec.train.max_epochs = 30;
  spec.train.patience = 5;
  spec.train.clip_max_norm = 1.0;
  return spec;
}

ComparisonResult run_comparison(const ComparisonSpec& spec,
                                std::ostream* progress) {
  spec.validate();
  const std::vector<Strategy> strategies = effective_strategies(spec);

  ComparisonResult result;
  for (std::uint64_t seed : spec.seeds) {
    Dataset dataset = generate_synthetic(spec.data, seed);
    SplitResult split = split_dataset(dataset, spec.ratios, seed);
    const std::vector<TrainingExample> train_set = to_examples(split.train);
    const std::vector<TrainingExample> val_set = to_examples(split.val);
    const std::vector<TrainingExample> test_set = to_examples(split.test);

    for (Strategy s : strategies) {
      ModelConfig mc = spec.model;
      mc.strategy = s;
      TrainConfig tc = spec.train;
      tc.seed = seed;

      Rng init_rng = Rng(seed).fork("model-" + strategy_name(s));
      TrainResult trained =
          train(FusionModel(mc, init_rng), train_set, val_set, tc);

      std::vector<std::size_t> truth;
      std::vector<std::size_t> pred;
      truth.reserve(test_set.size());
      pred.reserve(test_set.size());
      for (const PredictionRecord& p : predict(trained.model, test_set)) {
        truth.push_back(p.true_label);
        pred.push_back(p.predicted);
      }
      const EvalSummary eval = evaluate(truth, pred, kNumClasses);

      CellResult cell;
      cell.strategy = s;
      cell.seed = seed;
      cell.test_accuracy = eval.accuracy;
      cell.test_macro_f1 = eval.macro_f1;
      cell.best_val_macro_f1 = trained.history.best_val_macro_f1;
      cell.epochs_run = trained.history.stopping_epoch;
      result.cells.push_back(cell);

      if (progress != nullptr) {
        char line[160];
        std::snprintf(line, sizeof(line),
                      "seed %llu  %-14s test_acc %.4f  test_f1 %.4f  "
                      "epochs %zu\n",
                      static_cast<unsigned long long>(seed),
                      strategy_name(s).c_str(), eval.accuracy, eval.macro_f1,
                      trained.history.stopping_epoch);
        (*progress) << line << std::flush;
      }
    }
  }

  for (Strategy s : strategies) {
    StrategySummary summary;
    summary.strategy = s;
    summary.min_macro_f1 = 1.0;
    std::size_t count = 0;
    for (const CellResult& cell : result.cells) {
      if (cell.strategy != s) continue;
      summary.mean_accuracy += cell.test_accuracy;
      summary.mean_macro_f1 += cell.test_macro_f1;
      summary.min_macro_f1 = std::min(summary.min_macro_f1,
                                      cell.test_macro_f1);
      summary.max_macro_f1 = std::max(summary.max_macro_f1,
                                      cell.test_macro_f1);
      ++count;
    }
    summary.mean_accuracy /= double(count);
    summary.mean_macro_f1 /= double(count);
    result.summaries.push_back(summary);
  }
  return result;
}

std::string comparison_csv(const ComparisonResult& r) {
  std::string out =
      "strategy,seed,test_accuracy,test_macro_f1,best_val_macro_f1,epochs\n";
  for (const CellResult& c : r.cells) {
    out += strategy_name(c.strategy);
    out += ',';
    out += std::to_string(c.seed);
    out += ',';
    out += format_real(c.test_accuracy);
    out += ',';
    out += format_real(c.test_macro_f1);
    out += ',';
    out += format_real(c.best_val_macro_f1);
    out += ',';
    out += std::to_string(c.epochs_run);
    out += '\n';
  }
  return out;
}

std::string comparison_summary(const ComparisonResult& r) {
  std::string out =
      "strategy        mean_acc  mean_f1   min_f1    max_f1\n";
  for (const StrategySummary& s : r.summaries) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-15s %.4f    %.4f    %.4f    %.4f\n",
                  strategy_name(s.strategy).c_str(), s.mean_accuracy,
                  s.mean_macro_f1, s.min_macro_f1, s.max_macro_f1);
    out += line;
  }
  return out;
}

}  // namespace memefuse
