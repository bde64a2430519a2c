#pragma once

#include <functional>
#include <string>
#include <vector>

#include "memefuse/tensor.hpp"

namespace memefuse {

// Central finite-difference verification of reverse-mode gradients.
//
// The loss function is re-evaluated with each parameter entry nudged by
// +h and -h; the two-sided slope (f(x+h) - f(x-h)) / (2h) is compared
// against the analytic gradient entry by entry. The relative error uses
// |a - n| / max(|a|, |n|, 1), blending into absolute error for small
// gradients so that roundoff in near-zero entries does not register as
// disagreement.

struct GradCheckEntry {
  std::string name;        // parameter name
  std::size_t count = 0;   // number of scalar entries checked
  double max_rel_err = 0;  // worst entry for this parameter
  std::size_t worst_index = 0;
  double analytic = 0;     // values at the worst entry
  double numeric = 0;
  bool finite = true;      // false if f was non-finite at a perturbed point
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0;
  bool passed = false;
  double tolerance = 0;
};

// `loss_fn` must rebuild the loss graph from the current parameter values on
// every call; `params` are perturbed in place and restored afterwards.
GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           ParameterSet& params, double h = 1e-5,
                           double tolerance = 1e-4);

// Renders the per-parameter table the way the command-line tool prints it.
std::string render_grad_check(const GradCheckReport& report);

}  // namespace memefuse
