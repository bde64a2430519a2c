#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "memefuse/data.hpp"
#include "memefuse/evaluation.hpp"
#include "memefuse/fusion.hpp"
#include "memefuse/losses.hpp"
#include "memefuse/tensor.hpp"

namespace memefuse {

enum class LrSchedule { WarmupLinearDecay, WarmupConstant };

struct TrainConfig {
  double learning_rate = 2e-5;
  double weight_decay = 0.01;
  std::size_t micro_batch = 4;
  std::size_t accumulation_steps = 2;  // effective batch 8
  double warmup_fraction = 0.10;
  std::size_t max_epochs = 200;
  std::size_t patience = 5;
  double clip_max_norm = 1.0;
  std::uint64_t seed = 42;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  LrSchedule schedule = LrSchedule::WarmupLinearDecay;
  LossConfig loss;

  void validate() const;
};

struct OptimizerState {
  // Parameter name -> (first moment, second moment), same length as the
  // parameter's value array.
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>
      moments;
  std::size_t step = 0;
};

// One decoupled-weight-decay Adam update over every parameter:
//   theta <- theta - lr_t * mhat/(sqrt(vhat)+eps) - lr_t * lambda * theta
// with bias-corrected moments. The step counter advances once per call.
void adamw_step(ParameterSet& params, const GradientMap& grads,
                OptimizerState& state, const TrainConfig& cfg, double lr_t);

// Linear warmup to the base rate over W = max(1, round(warmup_fraction *
// total_steps)) steps, then linear decay to zero at total_steps (or constant
// under LrSchedule::WarmupConstant).
double lr_at(std::size_t step, std::size_t total_steps,
             const TrainConfig& cfg);

// Global-norm gradient clipping in place; returns the pre-clip norm.
double clip_gradients(GradientMap& grads, double max_norm);

// Early-stopping policy: an epoch improves when its macro F1 strictly
// exceeds the best seen; equal F1 with higher accuracy replaces the retained
// checkpoint without resetting patience, so ties favor the earliest epoch.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience);

  // Returns true when this epoch becomes the retained checkpoint.
  bool observe(double macro_f1, double accuracy, std::size_t epoch);
  bool should_stop() const { return since_improvement_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_macro_f1() const { return best_f1_; }
  double best_accuracy() const { return best_accuracy_; }

 private:
  std::size_t patience_;
  std::size_t since_improvement_ = 0;
  std::size_t best_epoch_ = 0;
  double best_f1_ = -1.0;
  double best_accuracy_ = -1.0;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  double val_macro_f1 = 0.0;
  double lr = 0.0;  // rate of the epoch's final optimizer step
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::size_t stopping_epoch = 0;
  std::size_t best_epoch = 0;
  double best_val_macro_f1 = 0.0;
  double best_val_accuracy = 0.0;
};

// epoch,train_loss,val_acc,val_macro_f1,lr with full-precision reals.
std::string history_csv(const TrainHistory& history);

// A sample ready for the model: encoded modality sequences plus the label.
struct TrainingExample {
  Tensor text;
  Tensor image;
  std::size_t label = 0;
  std::string id;
  std::string language;
};

// Materializes inline or file-referenced feature sequences. Records without
// precomputed features are rejected.
std::vector<TrainingExample> to_examples(const Dataset& d);

// Evaluation-mode predictions over a set of examples.
std::vector<PredictionRecord> predict(const FusionModel& model,
                                      const std::vector<TrainingExample>& examples);

struct TrainResult {
  FusionModel model;  // parameters of the best epoch, never the last
  TrainHistory history;
};

TrainResult train(FusionModel model,
                  const std::vector<TrainingExample>& train_set,
                  const std::vector<TrainingExample>& val_set,
                  const TrainConfig& cfg);
TrainResult train(FusionModel model, const Dataset& train_data,
                  const Dataset& val_data, const TrainConfig& cfg);

}  // namespace memefuse
