#pragma once

#include <optional>
#include <vector>

#include "memefuse/tensor.hpp"

namespace memefuse {

// Classification objective: focal loss with label smoothing and optional
// per-class weights. The pipeline composes as
//
//   q = smooth_labels(y)                   soft targets
//   loss = -alpha * w_y * sum_k q_k * (1 - p_k)^gamma * log p_k
//
// where p = softmax(logits) and w_y is the weight of the hard label. With
// gamma = 0, smoothing = 0 and no class weights this is exactly
// cross-entropy.
struct LossConfig {
  double alpha = 1.0;      // > 0
  double gamma = 2.0;      // >= 0, focusing exponent
  double smoothing = 0.1;  // in [0, 1)
  std::optional<std::vector<double>> class_weights;  // per class, > 0
};

// (1 - eps) one-hot plus eps/K spread over all classes. Components are
// adjusted so their floating-point sum is exactly 1.
std::vector<double> smooth_labels(std::size_t true_label, double eps,
                                  std::size_t num_classes);

// w_k = N / (K * n_k) for class counts n_k summing to N. Rarer classes get
// weights above 1, frequent ones below; sum_k (n_k / N) * w_k == 1.
std::vector<double> inverse_frequency_weights(
    const std::vector<std::size_t>& class_counts);

// Per-sample focal loss as a differentiable scalar. `logits` is a rank-1
// tensor over classes; `true_label` indexes it. Non-finite logits raise
// NumericalError.
Tensor focal_loss(const Tensor& logits, std::size_t true_label,
                  const LossConfig& cfg);

// Plain cross-entropy, provided for unimodal baselines.
Tensor cross_entropy(const Tensor& logits, std::size_t true_label);

}  // namespace memefuse
