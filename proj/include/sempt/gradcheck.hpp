#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sempt/errors.hpp"
#include "sempt/params.hpp"

namespace sempt {

// Verifies reverse-mode gradients against central finite differences in
// double precision. The callback evaluates the scalar objective for the given
// parameters; when `grads` is non-null it must also run backward and fill one
// grad vector per parameter (keyed like the store).
using GradCheckFn =
    std::function<double(const ParamStore<double>&, std::map<std::string, std::vector<double>>* grads)>;

struct GradCheckEntry {
  std::string param;
  double max_rel_err = 0.0;
  int64_t worst_index = -1;
  double autodiff = 0.0;
  double finite_diff = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 1e-3;
  bool pass = false;
  std::string failure;  // non-finite diagnostics

  double max_rel_err() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_err);
    return m;
  }
};

// rel_err = |ad - fd| / max(|ad|, |fd|, 1e-6); the absolute floor only
// matters when both sides are essentially zero.
inline double grad_rel_err(double ad, double fd) {
  return std::fabs(ad - fd) / std::max({std::fabs(ad), std::fabs(fd), 1e-6});
}

inline GradCheckReport grad_check(const GradCheckFn& f, const ParamStore<double>& params,
                                  double eps = 1e-3, double tolerance = 1e-3) {
  GradCheckReport report;
  report.tolerance = tolerance;

  std::map<std::string, std::vector<double>> grads;
  const double base = f(params, &grads);
  if (!std::isfinite(base)) {
    report.failure = "objective is non-finite at the evaluation point";
    return report;
  }

  bool ok = true;
  for (const auto& [name, entry] : params.items()) {
    auto git = grads.find(name);
    if (git == grads.end())
      throw ContractError("grad_check: callback returned no gradient for " + name);
    const auto& ad = git->second;
    if (ad.size() != entry.value.size())
      throw ContractError("grad_check: gradient size mismatch for " + name);

    GradCheckEntry row;
    row.param = name;
    ParamStore<double> probe = params;
    auto& pv = probe.at(name).value;
    for (size_t i = 0; i < pv.size(); ++i) {
      if (!std::isfinite(ad[i])) {
        report.failure = "non-finite autodiff gradient in parameter " + name;
        report.pass = false;
        report.entries.push_back(row);
        return report;
      }
      const double saved = pv[i];
      const double h = eps * std::max(1.0, std::fabs(saved));
      pv[i] = saved + h;
      const double fp = f(probe, nullptr);
      pv[i] = saved - h;
      const double fm = f(probe, nullptr);
      pv[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        report.failure = "non-finite objective while probing parameter " + name;
        report.pass = false;
        report.entries.push_back(row);
        return report;
      }
      const double fd = (fp - fm) / (2.0 * h);
      const double rel = grad_rel_err(ad[i], fd);
      if (rel > row.max_rel_err) {
        row.max_rel_err = rel;
        row.worst_index = static_cast<int64_t>(i);
        row.autodiff = ad[i];
        row.finite_diff = fd;
      }
    }
    if (row.max_rel_err >= tolerance) ok = false;
    report.entries.push_back(std::move(row));
  }
  report.pass = ok;
  return report;
}

}  // namespace sempt
