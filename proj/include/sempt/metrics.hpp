#pragma once

#include <cstdint>
#include <set>
#include <span>

namespace sempt {

// Fraction of correct predictions over items whose true category lies in the
// given subset. Metrics run in double regardless of model precision.
double accuracy(std::span<const int64_t> predictions, std::span<const int64_t> truths,
                const std::set<int64_t>& category_subset);

// 2bn/(b+n); accepts fractions or percentages, same scale out as in.
double harmonic_mean(double base_acc, double novel_acc);

// P(X >= wins) for X ~ Binomial(n, 1/2); the sign-test tail probability.
double sign_test_p_at_least(int64_t wins, int64_t n);

}  // namespace sempt
