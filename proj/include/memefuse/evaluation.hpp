#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "memefuse/errors.hpp"

namespace memefuse {

// Square count table; rows index the true label, columns the prediction.
// Class order follows the label enumeration (Hate, Inflammatory, Benign).
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  void add(std::size_t true_label, std::size_t predicted);
  std::size_t at(std::size_t true_label, std::size_t predicted) const;

  std::size_t num_classes() const { return num_classes_; }
  std::size_t total() const { return total_; }
  std::size_t row_total(std::size_t true_label) const;
  std::size_t col_total(std::size_t predicted) const;

 private:
  std::size_t num_classes_;
  std::size_t total_ = 0;
  std::vector<std::size_t> counts_;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct EvalSummary {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassMetrics> per_class;
  ConfusionMatrix confusion{1};
};

// Per-class precision/recall/F1 use the 0/0 -> 0 convention, and macro-F1
// averages over every class, present in the data or not.
EvalSummary summarize(const ConfusionMatrix& cm);
EvalSummary evaluate(const std::vector<std::size_t>& true_labels,
                     const std::vector<std::size_t>& predicted,
                     std::size_t num_classes);

double accuracy(const ConfusionMatrix& cm);
double macro_f1(const ConfusionMatrix& cm);

// One scored model output. probs must be nonnegative and sum to 1 within
// 1e-9, and predicted must attain the maximum probability.
struct PredictionRecord {
  std::string id;
  std::size_t true_label = 0;
  std::size_t predicted = 0;
  std::vector<double> probs;
  std::string language;
};

void validate_prediction(const PredictionRecord& p, std::size_t num_classes);

ConfusionMatrix confusion_matrix(const std::vector<PredictionRecord>& preds,
                                 std::size_t num_classes);

struct ConfusionPair {
  std::size_t true_label = 0;
  std::size_t predicted = 0;
  std::size_t count = 0;
};

// Off-diagonal cells sorted by count desc, then true asc, then predicted asc.
std::vector<ConfusionPair> top_confusions(const ConfusionMatrix& cm,
                                          std::size_t limit);

// Confidence buckets: errors made with max probability above the high
// threshold, tallied by true class; correct predictions with max probability
// below the low threshold, tallied by their top-2 class pair (sorted).
struct ConfidenceReport {
  double high_threshold = 0.8;
  double low_threshold = 0.5;
  std::size_t high_conf_error_total = 0;
  std::array<std::size_t, 3> high_conf_errors_by_true{};
  std::array<double, 3> high_conf_error_share{};  // zero when no errors
  std::size_t low_conf_correct_total = 0;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t>
      low_conf_correct_pairs;
};

ConfidenceReport confidence_report(const std::vector<PredictionRecord>& preds,
                                   double high_threshold = 0.8,
                                   double low_threshold = 0.5);

struct EvalReport {
  EvalSummary overall;
  ConfidenceReport confidence;
  std::vector<std::pair<std::string, EvalSummary>> by_language;
};

EvalReport build_eval_report(const std::vector<PredictionRecord>& preds,
                             std::size_t num_classes);

// Deterministic renderings for golden-file comparisons.
std::string render_eval_report(const EvalReport& report,
                               const std::vector<std::string>& class_names);
std::string render_confusion_csv(const ConfusionMatrix& cm,
                                 const std::vector<std::string>& class_names);

}  // namespace memefuse
