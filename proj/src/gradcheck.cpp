#include "memefuse/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace memefuse {

GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           ParameterSet& params, double h, double tolerance) {
  if (h <= 0.0) throw ContractError("grad_check: step must be positive");
  if (tolerance <= 0.0) {
    throw ContractError("grad_check: tolerance must be positive");
  }

  // Analytic gradients at the unperturbed point.
  Tensor loss = loss_fn();
  GradientMap analytic = backward(loss, params);

  GradCheckReport report;
  report.tolerance = tolerance;

  for (auto& [name, param] : params.items()) {
    GradCheckEntry entry;
    entry.name = name;
    entry.count = param.size();
    std::span<double> theta = const_cast<Tensor&>(param).raw_values();
    std::span<const double> a = analytic.at(name).values();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double saved = theta[i];
      double fp = 0.0, fm = 0.0;
      bool finite = true;
      try {
        theta[i] = saved + h;
        fp = loss_fn().value();
        theta[i] = saved - h;
        fm = loss_fn().value();
      } catch (const NumericalError&) {
        finite = false;
      }
      theta[i] = saved;
      if (!finite || !std::isfinite(fp) || !std::isfinite(fm)) {
        // A non-finite evaluation at a perturbed point is a failed
        // coordinate, not a crash.
        entry.finite = false;
        entry.max_rel_err = HUGE_VAL;
        entry.worst_index = i;
        break;
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double denom =
          std::max({std::fabs(a[i]), std::fabs(numeric), 1.0});
      const double rel = std::fabs(a[i] - numeric) / denom;
      if (rel > entry.max_rel_err) {
        entry.max_rel_err = rel;
        entry.worst_index = i;
        entry.analytic = a[i];
        entry.numeric = numeric;
      }
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.entries.push_back(std::move(entry));
  }
  report.passed = report.max_rel_err < tolerance;
  return report;
}

std::string render_grad_check(const GradCheckReport& report) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "%-28s %8s %14s %8s\n", "parameter",
                "entries", "max_rel_err", "status");
  os << line;
  for (const GradCheckEntry& e : report.entries) {
    const bool ok = e.finite && e.max_rel_err < report.tolerance;
    std::snprintf(line, sizeof(line), "%-28s %8zu %14.3e %8s\n",
                  e.name.c_str(), e.count, e.max_rel_err,
                  ok ? "ok" : "FAIL");
    os << line;
    if (!ok && e.finite) {
      std::snprintf(line, sizeof(line),
                    "    worst entry %zu: analytic %.10e vs numeric %.10e\n",
                    e.worst_index, e.analytic, e.numeric);
      os << line;
    } else if (!e.finite) {
      std::snprintf(line, sizeof(line),
                    "    non-finite loss at perturbed entry %zu\n",
                    e.worst_index);
      os << line;
    }
  }
  std::snprintf(line, sizeof(line), "overall max_rel_err %.3e tolerance %.1e %s\n",
                report.max_rel_err, report.tolerance,
                report.passed ? "PASS" : "FAIL");
  os << line;
  return os.str();
}

}  // namespace memefuse
