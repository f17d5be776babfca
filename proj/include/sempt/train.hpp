#pragma once

#include <cmath>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "sempt/dataset.hpp"
#include "sempt/errors.hpp"
#include "sempt/inference.hpp"
#include "sempt/model.hpp"
#include "sempt/params.hpp"
#include "sempt/rng.hpp"

namespace sempt {

struct TrainConfig {
  int64_t epochs = 50;
  int64_t batch_size = 16;
  double learning_rate = 1e-3;
  uint64_t seed = 0;
  bool verbose = false;
};

struct EpochStats {
  double total = 0.0;
  double label_loss = 0.0;
  double enhanced_loss = 0.0;
};

struct TrainState {
  int64_t epochs_run = 0;
  int64_t steps = 0;
  uint64_t seed = 0;
  std::vector<EpochStats> history;  // per-epoch means
};

// One optimization run over the seen-category training items. Per step: fresh
// tape, bind {prompts, fusion head}, label rows once, per-image aligned and
// enhanced rows, mixed loss, backward, Adam update. Frozen encoder weights
// never enter the trainable leaves.
template <typename T>
TrainState train(SemptModel<T>& model, const Dataset& dataset, const SplitSpec& split,
                 const TrainConfig& cfg) {
  if (cfg.epochs < 1 || cfg.batch_size < 1)
    throw ParamError("train: epochs and batch size must be >= 1");
  split.validate(dataset);

  // registry index per dataset category index
  std::vector<int64_t> reg_of_cat(dataset.categories.size());
  for (size_t c = 0; c < dataset.categories.size(); ++c)
    reg_of_cat[c] = model.registry.index_of(dataset.categories[c]);

  std::vector<int64_t> train_items = split.all_train();
  if (train_items.empty()) throw ParamError("train: split contains no training items");
  for (int64_t idx : train_items) {
    const auto& item = dataset.items[static_cast<size_t>(idx)];
    if (!model.registry.is_seen(reg_of_cat[static_cast<size_t>(item.category)]))
      throw ContractError("training item '" + item.key + "' carries an unseen-category label");
  }

  const int64_t n_seen = model.registry.num_seen();
  const bool seen_only = model.hyper.loss_over_seen_only;
  const T beta = static_cast<T>(model.hyper.beta);
  const T tau = static_cast<T>(model.hyper.tau_loss);

  Adam<T> optimizer(AdamConfig<T>{static_cast<T>(cfg.learning_rate)});
  TrainState state;
  state.seed = cfg.seed;

  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng = derive_rng(cfg.seed, "train.shuffle", static_cast<uint64_t>(epoch));
    shuffle_rng.shuffle(train_items);

    double epoch_total = 0.0, epoch_lbl = 0.0, epoch_enh = 0.0;
    int64_t epoch_batches = 0;

    for (size_t start = 0; start < train_items.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(train_items.size(), start + static_cast<size_t>(cfg.batch_size));
      Tape<T> tape;
      BoundModel<T> bound = bind_model(tape, model.params, /*trainable=*/true);
      std::vector<Tensor<T>> labels = label_rows(tape, model, bound);
      std::vector<Tensor<T>> loss_rows = labels;
      if (seen_only) loss_rows.resize(static_cast<size_t>(n_seen));

      std::vector<Tensor<T>> batch_lbl, batch_enh;
      for (size_t bi = start; bi < end; ++bi) {
        const auto& item = dataset.items[static_cast<size_t>(train_items[bi])];
        const int64_t y = reg_of_cat[static_cast<size_t>(item.category)];
        Tensor<T> v = model.backend.image_embedding(tape, item.key, item.features,
                                                    bound.visual_prompt);
        batch_lbl.push_back(classification_loss<T>(tape, v, loss_rows, y, tau));
        std::vector<Tensor<T>> enh = enhanced_rows(tape, model, bound, v, labels);
        if (seen_only) enh.resize(static_cast<size_t>(n_seen));
        batch_enh.push_back(classification_loss<T>(tape, v, enh, y, tau));
      }

      Tensor<T> mean_lbl = mean_all(stack_scalars(batch_lbl));
      Tensor<T> mean_enh = mean_all(stack_scalars(batch_enh));
      Tensor<T> loss = total_loss(mean_lbl, mean_enh, beta);

      if (!std::isfinite(static_cast<double>(loss.scalar()))) {
        std::string diag = "non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(state.steps) + "; batch:";
        for (size_t bi = start; bi < end; ++bi)
          diag += " " + dataset.items[static_cast<size_t>(train_items[bi])].key;
        diag += "; parameter norms:";
        for (const auto& [name, entry] : model.params.items()) {
          double sq = 0.0;
          for (T v : entry.value) sq += static_cast<double>(v) * static_cast<double>(v);
          diag += " " + name + "=" + std::to_string(std::sqrt(sq));
        }
        throw ContractError(diag);
      }

      tape.backward(loss);
      std::vector<std::pair<std::string, std::span<const T>>> grads;
      for (const auto& [name, leaf] : bound.leaves) grads.emplace_back(name, leaf.grad());
      optimizer.step(model.params, grads);

      epoch_total += static_cast<double>(loss.scalar());
      epoch_lbl += static_cast<double>(mean_lbl.scalar());
      epoch_enh += static_cast<double>(mean_enh.scalar());
      ++epoch_batches;
      ++state.steps;
    }

    EpochStats stats;
    stats.total = epoch_total / static_cast<double>(epoch_batches);
    stats.label_loss = epoch_lbl / static_cast<double>(epoch_batches);
    stats.enhanced_loss = epoch_enh / static_cast<double>(epoch_batches);
    state.history.push_back(stats);
    ++state.epochs_run;
    if (cfg.verbose)
      std::cerr << "epoch " << epoch << ": loss " << stats.total << " (label "
                << stats.label_loss << ", enhanced " << stats.enhanced_loss << ")\n";
  }
  return state;
}

}  // namespace sempt
