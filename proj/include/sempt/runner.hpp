#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sempt/config.hpp"
#include "sempt/dataset.hpp"
#include "sempt/inference.hpp"
#include "sempt/model.hpp"
#include "sempt/train.hpp"
#include "sempt/world.hpp"

namespace sempt {

// Everything one run needs, assembled from a config and a seed: world (or
// bank-backed dataset), split, registry, model.
struct Experiment {
  std::optional<SyntheticWorld> world;
  Dataset dataset;
  SplitSpec split;
  SemptModel<float> model;
  std::vector<int64_t> registry_of_category;  // dataset category idx -> registry idx
};

Experiment assemble_experiment(const RunConfig& config, uint64_t seed);

struct EvalResult {
  std::vector<int64_t> truths;  // registry indices, aligned with predictions
  std::vector<Prediction> predictions;
  std::vector<std::string> keys;
};

// Batched inference over the given items; embarrassingly parallel across
// images (each prediction runs on its own tape).
EvalResult evaluate_items(const InferenceEngine<float>& engine, const Dataset& dataset,
                          const std::vector<int64_t>& items,
                          const std::vector<int64_t>& registry_of_category,
                          InferenceMode mode);

struct ModeMetrics {
  std::string mode;
  double base = 0.0;   // percent
  double novel = 0.0;  // percent
  double hm = 0.0;     // percent
};

struct BaseToNovelReport {
  std::vector<ModeMetrics> modes;  // routed first; ablation modes when requested
  TrainState train_state;
  std::string checkpoint_path;
  std::string report_csv_path;
  std::string report_txt_path;
  double max_weight_sum_err = 0.0;
  double max_unit_norm_err = 0.0;
  double min_aggregate_norm = 0.0;
  double max_aggregate_norm = 0.0;
};

BaseToNovelReport run_base_to_novel(const RunConfig& config);

struct TrainRunReport {
  TrainState state;
  std::string checkpoint_path;
  std::string log_path;
};

TrainRunReport run_train(const RunConfig& config);

struct SweepRow {
  std::string value;
  double base = 0.0, novel = 0.0, hm = 0.0;
};

struct SweepReport {
  std::string axis;
  std::vector<SweepRow> rows;
  std::string csv_path;
};

// axis is "alpha", "beta" or "k"; one full run per value under a shared seed.
SweepReport run_sweep(const RunConfig& config, const std::string& axis,
                      const std::vector<std::string>& values);

struct TransferSeedRow {
  uint64_t seed = 0;
  double novel_label_only = 0.0;  // percent
  double novel_routed = 0.0;      // percent
  bool win = false;
};

struct TransferReport {
  std::vector<TransferSeedRow> rows;
  int64_t wins = 0;
  double p_value = 1.0;
  std::string csv_path;
};

// Enhanced routing vs label-only routing on novel items over many seeds.
TransferReport run_transfer_check(const RunConfig& config);

struct CrossDatasetReport {
  ModeMetrics source;        // base-to-novel metrics on the source world
  double target_routed = 0.0;      // percent, all-unseen target world
  double target_label_only = 0.0;  // percent
  std::string csv_path;
};

CrossDatasetReport run_cross_dataset(const RunConfig& config);

struct FewShotRow {
  int64_t shots = 0;
  double base = 0.0, novel = 0.0, hm = 0.0, overall = 0.0;
};

struct FewShotReport {
  std::vector<FewShotRow> rows;
  std::string csv_path;
};

FewShotReport run_few_shot(const RunConfig& config,
                           const std::vector<int64_t>& shot_counts = {1, 2, 4, 8, 16});

}  // namespace sempt
