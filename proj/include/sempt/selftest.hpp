#pragma once

#include <string>
#include <vector>

namespace sempt {

struct SelfTestResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Fast built-in verification: gradient checks against finite differences,
// selection and argmax oracles, metric arithmetic, softmax invariants,
// kernel serial/parallel agreement. Runs in seconds.
std::vector<SelfTestResult> run_selftest();

}  // namespace sempt
