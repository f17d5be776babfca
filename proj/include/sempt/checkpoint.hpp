#pragma once

#include <string>

#include "sempt/config.hpp"
#include "sempt/inference.hpp"

namespace sempt {

// Checkpoint file: u32 header length, JSON header (config, hyperparameters,
// registry, blob directory), then named f32 little-endian parameter blobs in
// directory order. Stores the trained parameters plus the frozen label rows
// and description embeddings, so prediction needs nothing but the checkpoint
// and an image bank.
void save_checkpoint(const std::string& path, const InferenceEngine<float>& engine,
                     const RunConfig& config);

InferenceEngine<float> load_checkpoint(const std::string& path);

// The resolved config embedded at save time.
RunConfig checkpoint_config(const std::string& path);

}  // namespace sempt
