#include "memefuse/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>

namespace memefuse {

namespace {

void append_f(std::string& out, const char* fmt, ...) {
  va_list args;
  va_start(args, fmt);
  char buf[256];
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  out += buf;
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : num_classes_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0) {
    throw ContractError("ConfusionMatrix: num_classes must be positive");
  }
}

void ConfusionMatrix::add(std::size_t true_label, std::size_t predicted) {
  if (true_label >= num_classes_ || predicted >= num_classes_) {
    throw ContractError("ConfusionMatrix::add: label out of range");
  }
  ++counts_[true_label * num_classes_ + predicted];
  ++total_;
}

std::size_t ConfusionMatrix::at(std::size_t true_label,
                                std::size_t predicted) const {
  if (true_label >= num_classes_ || predicted >= num_classes_) {
    throw ContractError("ConfusionMatrix::at: label out of range");
  }
  return counts_[true_label * num_classes_ + predicted];
}

std::size_t ConfusionMatrix::row_total(std::size_t true_label) const {
  std::size_t sum = 0;
  for (std::size_t j = 0; j < num_classes_; ++j) sum += at(true_label, j);
  return sum;
}

std::size_t ConfusionMatrix::col_total(std::size_t predicted) const {
  std::size_t sum = 0;
  for (std::size_t i = 0; i < num_classes_; ++i) sum += at(i, predicted);
  return sum;
}

EvalSummary summarize(const ConfusionMatrix& cm) {
  if (cm.total() == 0) {
    throw ContractError("summarize: empty confusion matrix");
  }
  EvalSummary out;
  out.confusion = cm;
  const std::size_t k = cm.num_classes();
  out.per_class.resize(k);

  std::size_t correct = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t tp = cm.at(c, c);
    const std::size_t support = cm.row_total(c);
    const std::size_t predicted_as = cm.col_total(c);
    correct += tp;

    ClassMetrics& m = out.per_class[c];
    m.support = support;
    m.precision = predicted_as == 0
                      ? 0.0
                      : static_cast<double>(tp) / static_cast<double>(predicted_as);
    m.recall = support == 0
                   ? 0.0
                   : static_cast<double>(tp) / static_cast<double>(support);
    m.f1 = (m.precision + m.recall) == 0.0
               ? 0.0
               : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  }

  out.accuracy = cm.total() == 0
                     ? 0.0
                     : static_cast<double>(correct) /
                           static_cast<double>(cm.total());
  double f1_sum = 0.0;
  for (const ClassMetrics& m : out.per_class) f1_sum += m.f1;
  out.macro_f1 = f1_sum / static_cast<double>(k);
  return out;
}

EvalSummary evaluate(const std::vector<std::size_t>& true_labels,
                     const std::vector<std::size_t>& predicted,
                     std::size_t num_classes) {
  if (true_labels.size() != predicted.size()) {
    throw ContractError("evaluate: label vectors must have equal length");
  }
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    cm.add(true_labels[i], predicted[i]);
  }
  return summarize(cm);
}

double accuracy(const ConfusionMatrix& cm) { return summarize(cm).accuracy; }

double macro_f1(const ConfusionMatrix& cm) { return summarize(cm).macro_f1; }

void validate_prediction(const PredictionRecord& p, std::size_t num_classes) {
  if (p.probs.size() != num_classes) {
    throw ContractError("prediction " + p.id +
                        ": probability vector has wrong length");
  }
  if (p.true_label >= num_classes || p.predicted >= num_classes) {
    throw ContractError("prediction " + p.id + ": label out of range");
  }
  double sum = 0.0;
  double max_prob = 0.0;
  for (double v : p.probs) {
    if (!(v >= 0.0)) {
      throw ContractError("prediction " + p.id +
                          ": probabilities must be nonnegative");
    }
    sum += v;
    max_prob = std::max(max_prob, v);
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ContractError("prediction " + p.id +
                        ": probabilities must sum to 1");
  }
  if (p.probs[p.predicted] != max_prob) {
    throw ContractError("prediction " + p.id +
                        ": predicted class must attain the max probability");
  }
}

ConfusionMatrix confusion_matrix(const std::vector<PredictionRecord>& preds,
                                 std::size_t num_classes) {
  if (preds.empty()) {
    throw ContractError("confusion_matrix: empty prediction list");
  }
  ConfusionMatrix cm(num_classes);
  for (const PredictionRecord& p : preds) {
    validate_prediction(p, num_classes);
    cm.add(p.true_label, p.predicted);
  }
  return cm;
}

std::vector<ConfusionPair> top_confusions(const ConfusionMatrix& cm,
                                          std::size_t limit) {
  std::vector<ConfusionPair> pairs;
  for (std::size_t i = 0; i < cm.num_classes(); ++i) {
    for (std::size_t j = 0; j < cm.num_classes(); ++j) {
      if (i == j || cm.at(i, j) == 0) continue;
      pairs.push_back({i, j, cm.at(i, j)});
    }
  }
  std::sort(pairs.begin(), pairs.end(),
            [](const ConfusionPair& a, const ConfusionPair& b) {
              if (a.count != b.count) return a.count > b.count;
              if (a.true_label != b.true_label) return a.true_label < b.true_label;
              return a.predicted < b.predicted;
            });
  if (pairs.size() > limit) pairs.resize(limit);
  return pairs;
}

ConfidenceReport confidence_report(const std::vector<PredictionRecord>& preds,
                                   double high_threshold,
                                   double low_threshold) {
  ConfidenceReport out;
  out.high_threshold = high_threshold;
  out.low_threshold = low_threshold;
  for (const PredictionRecord& p : preds) {
    validate_prediction(p, 3);
    const double max_prob = p.probs[p.predicted];
    if (p.predicted != p.true_label && max_prob > high_threshold) {
      ++out.high_conf_error_total;
      ++out.high_conf_errors_by_true[p.true_label];
    }
    if (p.predicted == p.true_label && max_prob < low_threshold) {
      ++out.low_conf_correct_total;
      std::size_t runner_up = p.predicted == 0 ? 1 : 0;
      for (std::size_t c = 0; c < p.probs.size(); ++c) {
        if (c == p.predicted) continue;
        if (p.probs[c] > p.probs[runner_up]) runner_up = c;
      }
      auto key = std::minmax(p.predicted, runner_up);
      ++out.low_conf_correct_pairs[{key.first, key.second}];
    }
  }
  if (out.high_conf_error_total > 0) {
    for (std::size_t c = 0; c < 3; ++c) {
      out.high_conf_error_share[c] =
          static_cast<double>(out.high_conf_errors_by_true[c]) /
          static_cast<double>(out.high_conf_error_total);
    }
  }
  return out;
}

EvalReport build_eval_report(const std::vector<PredictionRecord>& preds,
                             std::size_t num_classes) {
  EvalReport report;
  report.overall = summarize(confusion_matrix(preds, num_classes));
  report.confidence = confidence_report(preds);

  std::map<std::string, ConfusionMatrix> by_lang;
  for (const PredictionRecord& p : preds) {
    auto it = by_lang.find(p.language);
    if (it == by_lang.end()) {
      it = by_lang.emplace(p.language, ConfusionMatrix(num_classes)).first;
    }
    it->second.add(p.true_label, p.predicted);
  }
  for (const auto& [lang, cm] : by_lang) {
    report.by_language.emplace_back(lang, summarize(cm));
  }
  return report;
}

std::string render_confusion_csv(const ConfusionMatrix& cm,
                                 const std::vector<std::string>& class_names) {
  if (class_names.size() != cm.num_classes()) {
    throw ContractError("render_confusion_csv: one name per class required");
  }
  std::string out = "true\\pred";
  for (const std::string& name : class_names) {
    out += ',';
    out += name;
  }
  out += '\n';
  for (std::size_t i = 0; i < cm.num_classes(); ++i) {
    out += class_names[i];
    for (std::size_t j = 0; j < cm.num_classes(); ++j) {
      append_f(out, ",%zu", cm.at(i, j));
    }
    out += '\n';
  }
  return out;
}

namespace {

void render_summary_block(std::string& out, const EvalSummary& s,
                          const std::vector<std::string>& class_names) {
  append_f(out, "samples %zu\n", s.confusion.total());
  append_f(out, "accuracy %.6f\n", s.accuracy);
  append_f(out, "macro_f1 %.6f\n", s.macro_f1);
  for (std::size_t c = 0; c < s.per_class.size(); ++c) {
    const ClassMetrics& m = s.per_class[c];
    append_f(out, "class %s precision %.6f recall %.6f f1 %.6f support %zu\n",
             class_names[c].c_str(), m.precision, m.recall, m.f1, m.support);
  }
}

}  // namespace

std::string render_eval_report(const EvalReport& report,
                               const std::vector<std::string>& class_names) {
  if (class_names.size() != report.overall.per_class.size()) {
    throw ContractError("render_eval_report: one name per class required");
  }
  std::string out = "== overall ==\n";
  render_summary_block(out, report.overall, class_names);

  out += "== confusion matrix ==\n";
  out += render_confusion_csv(report.overall.confusion, class_names);

  const ConfidenceReport& conf = report.confidence;
  out += "== confidence ==\n";
  append_f(out, "high_confidence_errors %zu (max prob > %.2f)\n",
           conf.high_conf_error_total, conf.high_threshold);
  for (std::size_t c = 0; c < class_names.size() && c < 3; ++c) {
    append_f(out, "  true %s count %zu share %.5f\n", class_names[c].c_str(),
             conf.high_conf_errors_by_true[c], conf.high_conf_error_share[c]);
  }
  append_f(out, "low_confidence_correct %zu (max prob < %.2f)\n",
           conf.low_conf_correct_total, conf.low_threshold);
  for (const auto& [pair, count] : conf.low_conf_correct_pairs) {
    append_f(out, "  pair %s/%s count %zu\n", class_names[pair.first].c_str(),
             class_names[pair.second].c_str(), count);
  }

  for (const auto& [lang, summary] : report.by_language) {
    append_f(out, "== language %s ==\n", lang.c_str());
    render_summary_block(out, summary, class_names);
  }
  return out;
}

}  // namespace memefuse
