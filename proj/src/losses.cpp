#include "memefuse/losses.hpp"

#include <cmath>

namespace memefuse {

std::vector<double> smooth_labels(std::size_t true_label, double eps,
                                  std::size_t num_classes) {
  if (num_classes < 2) {
    throw ContractError("smooth_labels: need at least two classes");
  }
  if (true_label >= num_classes) {
    throw ContractError("smooth_labels: label out of range");
  }
  if (eps < 0.0 || eps >= 1.0) {
    throw ContractError("smooth_labels: eps must be in [0, 1)");
  }
  const double k = static_cast<double>(num_classes);
  std::vector<double> q(num_classes, eps / k);
  q[true_label] = 1.0 - eps + eps / k;
  // Nudge components until the left-to-right floating-point sum is exactly
  // one. Correction passes on the true-class entry get within a few ulps;
  // if intermediate rounding still blocks an exact hit there, walking the
  // last entry controls the final rounding directly and always lands.
  auto lsum = [&q] {
    double s = 0.0;
    for (double v : q) s += v;
    return s;
  };
  double s = lsum();
  for (int pass = 0; pass < 32 && s != 1.0; ++pass) {
    q[true_label] += 1.0 - s;
    s = lsum();
  }
  for (int step = 0; step < 64 && s != 1.0; ++step) {
    q.back() = std::nextafter(q.back(), s < 1.0 ? HUGE_VAL : -HUGE_VAL);
    s = lsum();
  }
  if (s != 1.0) {
    throw NumericalError("smooth_labels: could not normalize exactly");
  }
  return q;
}

std::vector<double> inverse_frequency_weights(
    const std::vector<std::size_t>& class_counts) {
  if (class_counts.size() < 2) {
    throw ContractError("inverse_frequency_weights: need at least two classes");
  }
  std::size_t total = 0;
  for (std::size_t n : class_counts) {
    if (n == 0) {
      throw ContractError(
          "inverse_frequency_weights: every class needs at least one sample");
    }
    total += n;
  }
  const double n_total = static_cast<double>(total);
  const double k = static_cast<double>(class_counts.size());
  std::vector<double> w(class_counts.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = n_total / (k * static_cast<double>(class_counts[i]));
  }
  return w;
}

namespace {

void validate_loss_config(const LossConfig& cfg, std::size_t num_classes) {
  if (!(cfg.alpha > 0.0) || !std::isfinite(cfg.alpha)) {
    throw ContractError("focal_loss: alpha must be positive");
  }
  if (!(cfg.gamma >= 0.0) || !std::isfinite(cfg.gamma)) {
    throw ContractError("focal_loss: gamma must be >= 0");
  }
  if (cfg.smoothing < 0.0 || cfg.smoothing >= 1.0) {
    throw ContractError("focal_loss: smoothing must be in [0, 1)");
  }
  if (cfg.class_weights) {
    if (cfg.class_weights->size() != num_classes) {
      throw ContractError("focal_loss: class weight count mismatch");
    }
    for (double w : *cfg.class_weights) {
      if (!(w > 0.0) || !std::isfinite(w)) {
        throw ContractError("focal_loss: class weights must be positive");
      }
    }
  }
}

}  // namespace

Tensor focal_loss(const Tensor& logits, std::size_t true_label,
                  const LossConfig& cfg) {
  if (!logits.defined() || logits.rank() != 1) {
    throw ContractError("focal_loss: logits must be a rank-1 tensor");
  }
  const std::size_t k = logits.size();
  if (k < 2) throw ContractError("focal_loss: need at least two classes");
  if (true_label >= k) throw ContractError("focal_loss: label out of range");
  validate_loss_config(cfg, k);
  for (double v : logits.values()) {
    if (!std::isfinite(v)) {
      throw NumericalError("focal_loss: non-finite logits");
    }
  }

  // Smoothing first, then focusing, then the hard-label class weight.
  const std::vector<double> q = smooth_labels(true_label, cfg.smoothing, k);
  Tensor targets = Tensor::from_values({k}, q);

  Tensor log_p = log_softmax(logits, 0);
  Tensor p = exp(log_p);
  Tensor modulation = pow_const(affine(p, -1.0, 1.0), cfg.gamma);
  Tensor terms = mul(mul(targets, modulation), log_p);

  const double w_y =
      cfg.class_weights ? (*cfg.class_weights)[true_label] : 1.0;
  return scale(sum(terms), -cfg.alpha * w_y);
}

Tensor cross_entropy(const Tensor& logits, std::size_t true_label) {
  LossConfig plain;
  plain.alpha = 1.0;
  plain.gamma = 0.0;
  plain.smoothing = 0.0;
  plain.class_weights.reset();
  return focal_loss(logits, true_label, plain);
}

}  // namespace memefuse
