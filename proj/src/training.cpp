#include "memefuse/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "memefuse/encoders.hpp"
#include "memefuse/errors.hpp"

namespace memefuse {

namespace {

bool all_finite(std::span<const double> xs) {
  for (double x : xs) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

std::string format_real(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ContractError("TrainConfig: learning_rate must be positive");
  }
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw ContractError("TrainConfig: weight_decay must be nonnegative");
  }
  if (micro_batch == 0) {
    throw ContractError("TrainConfig: micro_batch must be positive");
  }
  if (accumulation_steps == 0) {
    throw ContractError("TrainConfig: accumulation_steps must be positive");
  }
  if (!(warmup_fraction > 0.0) || !(warmup_fraction < 1.0)) {
    throw ContractError(
        "TrainConfig: warmup_fraction must lie strictly between 0 and 1");
  }
  if (max_epochs == 0) {
    throw ContractError("TrainConfig: max_epochs must be positive");
  }
  if (patience == 0) {
    throw ContractError("TrainConfig: patience must be at least 1");
  }
  if (!(clip_max_norm > 0.0) || !std::isfinite(clip_max_norm)) {
    throw ContractError("TrainConfig: clip_max_norm must be positive");
  }
  if (!(beta1 >= 0.0) || !(beta1 < 1.0)) {
    throw ContractError("TrainConfig: beta1 must lie in [0, 1)");
  }
  if (!(beta2 >= 0.0) || !(beta2 < 1.0)) {
    throw ContractError("TrainConfig: beta2 must lie in [0, 1)");
  }
  if (!(eps > 0.0) || !std::isfinite(eps)) {
    throw ContractError("TrainConfig: eps must be positive");
  }
}

void adamw_step(ParameterSet& params, const GradientMap& grads,
                OptimizerState& state, const TrainConfig& cfg, double lr_t) {
  if (!std::isfinite(lr_t) || lr_t < 0.0) {
    throw ContractError("adamw_step: lr_t must be finite and nonnegative");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  for (const auto& [name, stored] : params.items()) {
    if (!grads.contains(name)) {
      throw ContractError("adamw_step: missing gradient for " + name);
    }
    Tensor param = stored;
    const Tensor& grad = grads.at(name);
    if (grad.size() != param.size()) {
      throw ContractError("adamw_step: gradient size mismatch for " + name);
    }
    auto& [m, v] = state.moments[name];
    if (m.empty()) {
      m.assign(param.size(), 0.0);
      v.assign(param.size(), 0.0);
    } else if (m.size() != param.size()) {
      throw ContractError("adamw_step: stale optimizer state for " + name);
    }
    auto theta = param.raw_values();
    auto g = grad.values();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      theta[i] = theta[i] - lr_t * (mhat / (std::sqrt(vhat) + cfg.eps)) -
                 lr_t * cfg.weight_decay * theta[i];
    }
    if (!all_finite(theta)) {
      throw NumericalError("adamw_step: non-finite value in " + name);
    }
  }
}

double lr_at(std::size_t step, std::size_t total_steps,
             const TrainConfig& cfg) {
  if (total_steps == 0) {
    throw ContractError("lr_at: total_steps must be positive");
  }
  if (step > total_steps) {
    throw ContractError("lr_at: step exceeds total_steps");
  }
  std::size_t warmup = static_cast<std::size_t>(
      std::llround(cfg.warmup_fraction * double(total_steps)));
  warmup = std::clamp<std::size_t>(warmup, 1, total_steps);
  if (step <= warmup) {
    return cfg.learning_rate * double(step) / double(warmup);
  }
  if (cfg.schedule == LrSchedule::WarmupConstant) {
    return cfg.learning_rate;
  }
  return cfg.learning_rate * double(total_steps - step) /
         double(total_steps - warmup);
}

double clip_gradients(GradientMap& grads, double max_norm) {
  if (!(max_norm > 0.0) || !std::isfinite(max_norm)) {
    throw ContractError("clip_gradients: max_norm must be positive");
  }
  for (const auto& [name, g] : grads.entries()) {
    if (!all_finite(g.values())) {
      throw NumericalError("clip_gradients: non-finite gradient for " + name);
    }
  }
  const double norm = grads.global_l2_norm();
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& [name, g] : grads.entries()) {
      for (double& x : g.raw_values()) x *= scale;
    }
  }
  return norm;
}

EarlyStopper::EarlyStopper(std::size_t patience) : patience_(patience) {
  if (patience == 0) {
    throw ContractError("EarlyStopper: patience must be at least 1");
  }
}

bool EarlyStopper::observe(double macro_f1, double accuracy,
                           std::size_t epoch) {
  const bool improved = macro_f1 > best_f1_;
  const bool replace =
      improved || (macro_f1 == best_f1_ && accuracy > best_accuracy_);
  if (replace) {
    best_f1_ = macro_f1;
    best_accuracy_ = accuracy;
    best_epoch_ = epoch;
  }
  if (improved) {
    since_improvement_ = 0;
  } else {
    ++since_improvement_;
  }
  return replace;
}

std::string history_csv(const TrainHistory& history) {
  std::string out = "epoch,train_loss,val_acc,val_macro_f1,lr\n";
  for (const EpochStats& e : history.epochs) {
    out += std::to_string(e.epoch);
    out += ',';
    out += format_real(e.train_loss);
    out += ',';
    out += format_real(e.val_accuracy);
    out += ',';
    out += format_real(e.val_macro_f1);
    out += ',';
    out += format_real(e.lr);
    out += '\n';
  }
  return out;
}

std::vector<TrainingExample> to_examples(const Dataset& d) {
  std::vector<TrainingExample> out;
  out.reserve(d.records.size());
  for (const MemeRecord& r : d.records) {
    if (!r.features.has_value()) {
      throw DataError("record " + r.id +
                      ": training requires precomputed features");
    }
    auto resolve = [&](const FeatureRef& ref) {
      if (ref.data.has_value()) return feature_tensor(*ref.data);
      if (ref.path.has_value()) return load_feature_file(*ref.path);
      throw DataError("record " + r.id + ": empty feature reference");
    };
    TrainingExample ex;
    ex.text = resolve(r.features->text_vec);
    ex.image = resolve(r.features->image_vec);
    ex.label = static_cast<std::size_t>(r.label);
    ex.id = r.id;
    ex.language = language_name(r.language);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<PredictionRecord> predict(
    const FusionModel& model, const std::vector<TrainingExample>& examples) {
  std::vector<PredictionRecord> out;
  out.reserve(examples.size());
  for (const TrainingExample& ex : examples) {
    PredictionRecord p;
    p.id = ex.id;
    p.true_label = ex.label;
    p.probs = model.predict_probs(ex.text, ex.image);
    p.predicted = 0;
    for (std::size_t k = 1; k < p.probs.size(); ++k) {
      if (p.probs[k] > p.probs[p.predicted]) p.predicted = k;
    }
    p.language = ex.language;
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

std::pair<double, double> validation_scores(
    const FusionModel& model, const std::vector<TrainingExample>& val_set) {
  std::vector<std::size_t> truth;
  std::vector<std::size_t> pred;
  truth.reserve(val_set.size());
  pred.reserve(val_set.size());
  for (const PredictionRecord& p : predict(model, val_set)) {
    truth.push_back(p.true_label);
    pred.push_back(p.predicted);
  }
  const EvalSummary s = evaluate(truth, pred, kNumClasses);
  return {s.accuracy, s.macro_f1};
}

}  // namespace

TrainResult train(FusionModel model,
                  const std::vector<TrainingExample>& train_set,
                  const std::vector<TrainingExample>& val_set,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) {
    throw ContractError("train: training split is empty");
  }
  if (val_set.empty()) {
    throw ContractError("train: validation split is empty");
  }

  const std::size_t n = train_set.size();
  const std::size_t group_capacity = cfg.micro_batch * cfg.accumulation_steps;
  const std::size_t steps_per_epoch =
      (n + group_capacity - 1) / group_capacity;
  const std::size_t total_steps = cfg.max_epochs * steps_per_epoch;

  Rng base(cfg.seed);
  Rng shuffle_rng = base.fork("shuffle");
  Rng dropout_rng = base.fork("dropout");

  ParameterSet& params = model.params();
  OptimizerState state;
  EarlyStopper stopper(cfg.patience);
  TrainHistory history;
  std::vector<std::vector<double>> best_values;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::size_t global_step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    double last_lr = 0.0;

    for (std::size_t start = 0; start < n; start += group_capacity) {
      const std::size_t group_n = std::min(group_capacity, n - start);
      try {
        std::map<std::string, std::vector<double>> accum;
        for (std::size_t mstart = start; mstart < start + group_n;
             mstart += cfg.micro_batch) {
          const std::size_t mb_n =
              std::min(cfg.micro_batch, start + group_n - mstart);
          Tensor micro_sum;
          for (std::size_t k = 0; k < mb_n; ++k) {
            const TrainingExample& ex = train_set[order[mstart + k]];
            Tensor logits =
                model.forward(ex.text, ex.image, true, &dropout_rng);
            Tensor l = focal_loss(logits, ex.label, cfg.loss);
            micro_sum = micro_sum.defined() ? add(micro_sum, l) : l;
          }
          loss_sum += micro_sum.value();
          Tensor contrib = scale(micro_sum, 1.0 / double(group_n));
          GradientMap g = backward(contrib, params);
          for (const auto& [name, grad] : g.entries()) {
            auto& bucket = accum[name];
            auto vals = grad.values();
            if (bucket.empty()) {
              bucket.assign(vals.begin(), vals.end());
            } else {
              for (std::size_t i = 0; i < bucket.size(); ++i) {
                bucket[i] += vals[i];
              }
            }
          }
        }

        GradientMap grads;
        for (const auto& [name, param] : params.items()) {
          grads.set(name, Tensor::from_values(param.shape(),
                                              std::move(accum[name])));
        }
        clip_gradients(grads, cfg.clip_max_norm);
        ++global_step;
        last_lr = lr_at(global_step, total_steps, cfg);
        adamw_step(params, grads, state, cfg, last_lr);
      } catch (const NumericalError& e) {
        throw NumericalError("training aborted at epoch " +
                             std::to_string(epoch) + ", step " +
                             std::to_string(global_step + 1) + ": " +
                             e.what());
      }
    }

    const auto [val_acc, val_f1] = validation_scores(model, val_set);
    history.epochs.push_back(EpochStats{epoch, loss_sum / double(n), val_acc,
                                        val_f1, last_lr});
    if (stopper.observe(val_f1, val_acc, epoch)) {
      best_values.clear();
      best_values.reserve(params.size());
      for (const auto& [name, param] : params.items()) {
        auto vals = param.values();
        best_values.emplace_back(vals.begin(), vals.end());
      }
    }
    if (stopper.should_stop()) break;
  }

  history.stopping_epoch = history.epochs.size();
  history.best_epoch = stopper.best_epoch();
  history.best_val_macro_f1 = stopper.best_macro_f1();
  history.best_val_accuracy = stopper.best_accuracy();

  std::size_t idx = 0;
  for (const auto& [name, stored] : params.items()) {
    Tensor param = stored;
    auto theta = param.raw_values();
    std::copy(best_values[idx].begin(), best_values[idx].end(), theta.begin());
    ++idx;
  }
  return TrainResult{std::move(model), std::move(history)};
}

TrainResult train(FusionModel model, const Dataset& train_data,
                  const Dataset& val_data, const TrainConfig& cfg) {
  return train(std::move(model), to_examples(train_data),
               to_examples(val_data), cfg);
}

}  // namespace memefuse
