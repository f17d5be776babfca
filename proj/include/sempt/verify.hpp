#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "sempt/dataset.hpp"
#include "sempt/gradcheck.hpp"
#include "sempt/model.hpp"

namespace sempt {

// Double-precision toy-world fixture for gradient verification: a small
// synthetic world, a toy-backend model, and a batch of training images. The
// objective callback evaluates the full mixed loss for any parameter values
// and optionally returns reverse-mode gradients.
class GradHarness {
 public:
  GradHarness(uint64_t seed, int64_t num_seen, int64_t num_unseen, int64_t batch_size,
              HyperParams hyper);

  const ParamStore<double>& params() const { return model_->params; }
  GradCheckFn loss_fn() const;

 private:
  std::shared_ptr<SemptModel<double>> model_;
  std::shared_ptr<Dataset> dataset_;
  std::vector<int64_t> batch_;
  std::vector<int64_t> registry_of_category_;
};

// Full-pipeline gradient check: every trainable parameter group against
// central finite differences, 64-bit, on a 3-seen/2-unseen toy world.
GradCheckReport verify_pipeline_gradients(uint64_t seed = 5, double eps = 1e-3,
                                          double tolerance = 1e-3);

}  // namespace sempt
