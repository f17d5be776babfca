#include "sempt/metrics.hpp"

#include <cmath>
#include <string>

#include "sempt/errors.hpp"

namespace sempt {

double accuracy(std::span<const int64_t> predictions, std::span<const int64_t> truths,
                const std::set<int64_t>& category_subset) {
  if (predictions.size() != truths.size())
    throw ParamError("accuracy: prediction and truth lists are not aligned (" +
                     std::to_string(predictions.size()) + " vs " +
                     std::to_string(truths.size()) + ")");
  if (category_subset.empty()) throw MetricError("accuracy over an empty category subset");
  int64_t total = 0, correct = 0;
  for (size_t i = 0; i < truths.size(); ++i) {
    if (!category_subset.count(truths[i])) continue;
    ++total;
    if (predictions[i] == truths[i]) ++correct;
  }
  if (total == 0) throw MetricError("accuracy: no items fall in the category subset");
  return static_cast<double>(correct) / static_cast<double>(total);
}

double harmonic_mean(double base_acc, double novel_acc) {
  if (base_acc <= 0.0 || novel_acc <= 0.0)
    throw MetricError("harmonic mean undefined for non-positive accuracy");
  if (base_acc > 100.0 || novel_acc > 100.0)
    throw MetricError("accuracy above 100: wrong scale");
  return 2.0 * base_acc * novel_acc / (base_acc + novel_acc);
}

double sign_test_p_at_least(int64_t wins, int64_t n) {
  if (n < 1 || wins < 0 || wins > n) throw ParamError("sign test: invalid counts");
  // sum C(n,k)/2^n for k in [wins, n], evaluated in log space
  double p = 0.0;
  for (int64_t k = wins; k <= n; ++k) {
    double log_c = 0.0;
    for (int64_t i = 0; i < k; ++i)
      log_c += std::log(static_cast<double>(n - i)) - std::log(static_cast<double>(i + 1));
    p += std::exp(log_c - static_cast<double>(n) * std::log(2.0));
  }
  return p > 1.0 ? 1.0 : p;
}

}  // namespace sempt
