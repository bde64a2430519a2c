#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "memefuse/data.hpp"
#include "memefuse/fusion.hpp"
#include "memefuse/training.hpp"

namespace memefuse {

// One strategy-comparison campaign: the same synthetic datasets (one per
// seed) are split, every strategy trains on the identical partitions, and
// held-out test metrics are aggregated per strategy. Pairing the strategies
// on shared data keeps the comparison tight at desk scale.
struct ComparisonSpec {
  SyntheticSpec data;
  std::array<double, 3> ratios{0.7, 0.15, 0.15};
  std::vector<Strategy> strategies;  // empty means all eight
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  ModelConfig model;  // strategy field is overwritten per run
  TrainConfig train;  // seed field is overwritten per run

  void validate() const;

  // The tuned desk-scale recipe: joint-signal 0.7, label-noise 0.05,
  // 600 samples per class, and model/training dims sized so the full
  // eight-strategy, five-seed sweep stays a coffee-break job.
  static ComparisonSpec desk_default();
};

struct CellResult {
  Strategy strategy = Strategy::Mcfm;
  std::uint64_t seed = 0;
  double test_accuracy = 0.0;
  double test_macro_f1 = 0.0;
  double best_val_macro_f1 = 0.0;
  std::size_t epochs_run = 0;
};

struct StrategySummary {
  Strategy strategy = Strategy::Mcfm;
  double mean_accuracy = 0.0;
  double mean_macro_f1 = 0.0;
  double min_macro_f1 = 0.0;
  double max_macro_f1 = 0.0;
};

struct ComparisonResult {
  std::vector<CellResult> cells;  // seed-major, strategy-minor
  std::vector<StrategySummary> summaries;
};

// Runs the full sweep. `progress`, when given, receives one line per
// finished cell.
ComparisonResult run_comparison(const ComparisonSpec& spec,
                                std::ostream* progress = nullptr);

// Per-cell rows: strategy,seed,test_accuracy,test_macro_f1,
// best_val_macro_f1,epochs. Full-precision reals; byte-stable.
std::string comparison_csv(const ComparisonResult& r);

// Fixed-width mean table in declaration order of Strategy; byte-stable.
std::string comparison_summary(const ComparisonResult& r);

}  // namespace memefuse
