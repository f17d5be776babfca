#include "sempt/verify.hpp"

#include "sempt/train.hpp"
#include "sempt/world.hpp"

namespace sempt {

GradHarness::GradHarness(uint64_t seed, int64_t num_seen, int64_t num_unseen,
                         int64_t batch_size, HyperParams hyper) {
  SyntheticWorldSpec spec;
  spec.latent_attributes = 4;
  spec.attributes_per_category = 2;
  spec.num_seen = num_seen;
  spec.num_unseen = num_unseen;
  spec.samples_per_category = 4;
  spec.noise_sigma = 0.1;
  spec.label_noise = 0.8;
  spec.embed_dim = 8;
  spec.descriptions_per_category = 3;
  spec.seed = seed;
  SyntheticWorld world = generate_synthetic_world(spec);

  SplitSpec split = make_split_with_counts(world.dataset, seed, /*shots=*/2, num_seen);
  CategoryRegistry registry =
      CategoryRegistry::from_split(split.seen_categories, split.unseen_categories);

  EncoderConfig ec;
  ec.input_width = spec.embed_dim;
  ec.embed_dim = 8;
  ec.mixing_layers = 2;
  ec.vocab_size = 512;
  ec.visual_prompt_len = 2;
  ec.text_prompt_len = 2;
  ec.seed = seed;

  model_ = std::make_shared<SemptModel<double>>(SemptModel<double>::build(
      hyper, registry, world.descriptions, Backend<double>::toy(ec), seed));
  dataset_ = std::make_shared<Dataset>(world.dataset);

  registry_of_category_.resize(dataset_->categories.size());
  for (size_t c = 0; c < dataset_->categories.size(); ++c)
    registry_of_category_[c] = model_->registry.index_of(dataset_->categories[c]);

  std::vector<int64_t> pool = split.all_train();
  for (int64_t i = 0; i < batch_size && i < static_cast<int64_t>(pool.size()); ++i)
    batch_.push_back(pool[static_cast<size_t>(i)]);
}

GradCheckFn GradHarness::loss_fn() const {
  auto model = model_;
  auto dataset = dataset_;
  auto batch = batch_;
  auto reg_of_cat = registry_of_category_;
  return [model, dataset, batch, reg_of_cat](
             const ParamStore<double>& params,
             std::map<std::string, std::vector<double>>* grads) -> double {
    Tape<double> tape;
    BoundModel<double> bound = bind_model(tape, params, /*trainable=*/true);
    std::vector<Tensor<double>> labels = label_rows(tape, *model, bound);
    std::vector<Tensor<double>> batch_lbl, batch_enh;
    for (int64_t idx : batch) {
      const auto& item = dataset->items[static_cast<size_t>(idx)];
      const int64_t y = reg_of_cat[static_cast<size_t>(item.category)];
      Tensor<double> v =
          model->backend.image_embedding(tape, item.key, item.features, bound.visual_prompt);
      batch_lbl.push_back(classification_loss<double>(tape, v, labels, y,
                                                      model->hyper.tau_loss));
      std::vector<Tensor<double>> enh = enhanced_rows(tape, *model, bound, v, labels);
      batch_enh.push_back(
          classification_loss<double>(tape, v, enh, y, model->hyper.tau_loss));
    }
    Tensor<double> loss = total_loss(mean_all(stack_scalars(batch_lbl)),
                                     mean_all(stack_scalars(batch_enh)), model->hyper.beta);
    if (grads) {
      tape.backward(loss);
      for (const auto& [name, leaf] : bound.leaves)
        (*grads)[name] = std::vector<double>(leaf.grad().begin(), leaf.grad().end());
    }
    return loss.scalar();
  };
}

GradCheckReport verify_pipeline_gradients(uint64_t seed, double eps, double tolerance) {
  HyperParams hyper;  // defaults: alpha 0.2, beta 0.4, top_k 2, tau 0.07
  GradHarness harness(seed, /*num_seen=*/3, /*num_unseen=*/2, /*batch_size=*/3, hyper);
  return grad_check(harness.loss_fn(), harness.params(), eps, tolerance);
}

}  // namespace sempt
