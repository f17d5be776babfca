#include "sempt/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "sempt/checkpoint.hpp"
#include "sempt/errors.hpp"
#include "sempt/metrics.hpp"
#include "sempt/strings.hpp"
#include "sempt/version.hpp"

namespace sempt {

namespace {

namespace fs = std::filesystem;

void ensure_dir(const std::string& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << content;
}

std::string pct(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", fraction * 100.0);
  return buf;
}

std::string config_header(const RunConfig& cfg) {
  std::string out;
  for (const auto& line : cfg.header_lines()) out += line + "\n";
  return out;
}

HyperParams hyper_from(const RunConfig& cfg) {
  HyperParams h;
  h.alpha = cfg.alpha;
  h.beta = cfg.beta;
  h.top_k = cfg.top_k;
  h.tau_loss = cfg.tau_loss;
  h.tau_align = cfg.tau_align;
  h.normalize_enhanced = cfg.normalize_enhanced;
  h.loss_over_seen_only = cfg.loss_over_seen_only;
  h.validate();
  return h;
}

bool is_defaulted(const RunConfig& cfg, const std::string& key) {
  auto it = cfg.provenance.find(key);
  return it == cfg.provenance.end() || it->second == "default";
}

}  // namespace

Experiment assemble_experiment(const RunConfig& config, uint64_t seed) {
  config.validate();

  if (!config.data_bank.empty()) {
    // Bank-backed dataset: items + SEMB bank + knowledge cache.
    if (config.data_items.empty())
      throw ParamError("data.bank is set but data.items is missing");
    if (config.knowledge_cache.empty())
      throw ParamError("bank-backed runs need knowledge_cache for descriptions");
    EmbeddingBank bank = EmbeddingBank::load(config.data_bank);
    Dataset dataset = load_bank_dataset(bank, config.data_items);
    SplitSpec split = make_base_novel_split(dataset, seed, config.shots);
    CategoryRegistry registry =
        CategoryRegistry::from_split(split.seen_categories, split.unseen_categories);
    KnowledgeResult knowledge = load_knowledge_cache(config.knowledge_cache);

    EncoderConfig ec = config.encoder;
    Backend<float> backend = config.backend == "toy"
                                 ? Backend<float>::toy(ec)
                                 : Backend<float>::precomputed(ec, std::move(bank));
    SemptModel<float> model = SemptModel<float>::build(
        hyper_from(config), registry, knowledge.descriptions, std::move(backend), seed);

    Experiment exp{std::nullopt, std::move(dataset), std::move(split), std::move(model), {}};
    exp.registry_of_category.resize(exp.dataset.categories.size());
    for (size_t c = 0; c < exp.dataset.categories.size(); ++c)
      exp.registry_of_category[c] = exp.model.registry.index_of(exp.dataset.categories[c]);
    return exp;
  }

  SyntheticWorldSpec spec = config.world;
  if (is_defaulted(config, "world.seed")) spec.seed = seed;
  SyntheticWorld world = generate_synthetic_world(spec);

  SplitSpec split =
      !world.designated_seen.empty() &&
              std::any_of(world.designated_seen.begin(), world.designated_seen.end(),
                          [](bool b) { return b; })
          ? make_designated_split(world.dataset, seed, config.shots, world.designated_seen)
          : make_split_with_counts(world.dataset, seed, config.shots, spec.num_seen);
  CategoryRegistry registry =
      CategoryRegistry::from_split(split.seen_categories, split.unseen_categories);

  EncoderConfig ec = config.encoder;
  Backend<float> backend = [&] {
    if (config.backend == "toy") {
      // The toy image branch consumes raw world features, one token wide.
      if (is_defaulted(config, "encoder.input_width")) ec.input_width = spec.embed_dim;
      if (static_cast<int64_t>(world.dataset.items.front().features.size()) != ec.input_width)
        throw ParamError("toy encoder input width " + std::to_string(ec.input_width) +
                         " does not match world feature dimension " +
                         std::to_string(world.dataset.items.front().features.size()));
      return Backend<float>::toy(ec);
    }
    // Precomputed: one bank holding image features and text ground truth.
    if (is_defaulted(config, "encoder.embed_dim")) ec.embed_dim = spec.embed_dim;
    if (ec.embed_dim != spec.embed_dim)
      throw ParamError("precomputed backend needs encoder.embed_dim == world.embed_dim");
    EmbeddingBank merged(spec.embed_dim);
    for (const auto& key : world.image_bank.keys())
      merged.insert(key, world.image_bank.stored(key));
    for (const auto& key : world.text_bank.keys())
      merged.insert(key, world.text_bank.stored(key));
    return Backend<float>::precomputed(ec, std::move(merged));
  }();

  SemptModel<float> model = SemptModel<float>::build(hyper_from(config), registry,
                                                     world.descriptions, std::move(backend),
                                                     seed);
  Experiment exp{std::move(world), {}, std::move(split), std::move(model), {}};
  exp.dataset = exp.world->dataset;
  exp.registry_of_category.resize(exp.dataset.categories.size());
  for (size_t c = 0; c < exp.dataset.categories.size(); ++c)
    exp.registry_of_category[c] = exp.model.registry.index_of(exp.dataset.categories[c]);
  return exp;
}

EvalResult evaluate_items(const InferenceEngine<float>& engine, const Dataset& dataset,
                          const std::vector<int64_t>& items,
                          const std::vector<int64_t>& registry_of_category,
                          InferenceMode mode) {
  EvalResult result;
  const int64_t n = static_cast<int64_t>(items.size());
  result.truths.resize(static_cast<size_t>(n));
  result.predictions.resize(static_cast<size_t>(n));
  result.keys.resize(static_cast<size_t>(n));

#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    const auto& item = dataset.items[static_cast<size_t>(items[static_cast<size_t>(i)])];
    std::vector<float> v = engine.encoder
                               ? engine.embed_features(item.features)
                               : item.features;
    engine.note_image_embedding(v);
    result.predictions[static_cast<size_t>(i)] = engine.predict(v, mode);
    result.truths[static_cast<size_t>(i)] =
        registry_of_category[static_cast<size_t>(item.category)];
    result.keys[static_cast<size_t>(i)] = item.key;
  }
  return result;
}

namespace {

struct SplitCategories {
  std::set<int64_t> seen, unseen;
};

SplitCategories split_categories(const CategoryRegistry& registry) {
  SplitCategories out;
  for (int64_t c = 0; c < registry.size(); ++c)
    (registry.is_seen(c) ? out.seen : out.unseen).insert(c);
  return out;
}

std::vector<int64_t> predicted_of(const EvalResult& r) {
  std::vector<int64_t> out;
  out.reserve(r.predictions.size());
  for (const auto& p : r.predictions) out.push_back(p.category);
  return out;
}

ModeMetrics metrics_for(const std::string& mode, const EvalResult& result,
                        const SplitCategories& cats) {
  ModeMetrics m;
  m.mode = mode;
  const std::vector<int64_t> preds = predicted_of(result);
  m.base = accuracy(preds, result.truths, cats.seen) * 100.0;
  m.novel = accuracy(preds, result.truths, cats.unseen) * 100.0;
  m.hm = harmonic_mean(m.base, m.novel);
  return m;
}

void dump_alignment_diagnostics(const std::string& dir, const InferenceEngine<float>& engine,
                                const Dataset& dataset, const std::vector<int64_t>& items) {
  ensure_dir(dir);
  for (int64_t idx : items) {
    const auto& item = dataset.items[static_cast<size_t>(idx)];
    std::vector<float> v = engine.encoder ? engine.embed_features(item.features)
                                          : item.features;
    std::string csv = "image_id,category,description_index,score,weight,selected\n";
    for (int64_t c = 0; c < engine.registry.size(); ++c) {
      if (engine.registry.is_seen(c)) continue;
      std::vector<AlignmentRow> rows;
      engine.enhanced_row_values(c, v, &rows);
      for (const auto& row : rows) {
        csv += item.key + "," + engine.registry.names[static_cast<size_t>(row.category)] + "," +
               std::to_string(row.description_index) + "," + format_float(row.score) + "," +
               format_float(row.weight) + "," + (row.selected ? "1" : "0") + "\n";
      }
    }
    write_file(dir + "/" + item.key + ".csv", csv);
  }
}

std::string train_log_csv(const RunConfig& cfg, const TrainState& state) {
  std::string csv = config_header(cfg);
  csv += "epoch,total_loss,label_loss,enhanced_loss\n";
  for (size_t e = 0; e < state.history.size(); ++e) {
    const auto& st = state.history[e];
    csv += std::to_string(e) + "," + format_double(st.total) + "," +
           format_double(st.label_loss) + "," + format_double(st.enhanced_loss) + "\n";
  }
  return csv;
}

}  // namespace

TrainRunReport run_train(const RunConfig& config) {
  ensure_dir(config.out_dir);
  Experiment exp = assemble_experiment(config, config.seed);
  TrainConfig tc{config.epochs, config.batch_size, config.learning_rate, config.seed, false};
  TrainState state = train(exp.model, exp.dataset, exp.split, tc);
  InferenceEngine<float> engine = InferenceEngine<float>::from_model(exp.model);

  TrainRunReport report;
  report.state = state;
  report.checkpoint_path = config.out_dir + "/checkpoint.sempt";
  report.log_path = config.out_dir + "/train_log.csv";
  save_checkpoint(report.checkpoint_path, engine, config);
  write_file(report.log_path, train_log_csv(config, state));
  write_file(config.out_dir + "/split.json", exp.split.to_json());
  return report;
}

BaseToNovelReport run_base_to_novel(const RunConfig& config) {
  ensure_dir(config.out_dir);
  Experiment exp = assemble_experiment(config, config.seed);
  TrainConfig tc{config.epochs, config.batch_size, config.learning_rate, config.seed, false};
  TrainState state = train(exp.model, exp.dataset, exp.split, tc);
  InferenceEngine<float> engine = InferenceEngine<float>::from_model(exp.model);

  const std::vector<int64_t> test_items = exp.split.all_test();
  const SplitCategories cats = split_categories(exp.model.registry);

  BaseToNovelReport report;
  report.train_state = state;

  std::vector<InferenceMode> modes = {InferenceMode::kRouted};
  if (config.ablate_embedding) {
    modes.push_back(InferenceMode::kLabelOnly);
    modes.push_back(InferenceMode::kEnhancedAll);
  }
  for (InferenceMode mode : modes) {
    EvalResult result =
        evaluate_items(engine, exp.dataset, test_items, exp.registry_of_category, mode);
    report.modes.push_back(metrics_for(inference_mode_name(mode), result, cats));
  }

  // artifacts
  std::string csv = config_header(config);
  csv += "mode,base,novel,hm\n";
  for (const auto& m : report.modes)
    csv += m.mode + "," + pct(m.base / 100.0) + "," + pct(m.novel / 100.0) + "," +
           pct(m.hm / 100.0) + "\n";
  report.report_csv_path = config.out_dir + "/report.csv";
  write_file(report.report_csv_path, csv);

  std::string txt = "base-to-novel report (" + std::string(kVersion) + ")\n\n";
  char line[128];
  std::snprintf(line, sizeof(line), "%-14s %8s %8s %8s\n", "mode", "Base", "Novel", "HM");
  txt += line;
  for (const auto& m : report.modes) {
    std::snprintf(line, sizeof(line), "%-14s %8.2f %8.2f %8.2f\n", m.mode.c_str(), m.base,
                  m.novel, m.hm);
    txt += line;
  }
  txt += "\nresolved configuration\n" + config_header(config);
  report.report_txt_path = config.out_dir + "/report.txt";
  write_file(report.report_txt_path, txt);

  report.checkpoint_path = config.out_dir + "/checkpoint.sempt";
  save_checkpoint(report.checkpoint_path, engine, config);
  write_file(config.out_dir + "/train_log.csv", train_log_csv(config, state));
  write_file(config.out_dir + "/split.json", exp.split.to_json());

  if (config.dump_diagnostics)
    dump_alignment_diagnostics(config.out_dir + "/diagnostics", engine, exp.dataset,
                               test_items);

  report.max_weight_sum_err = engine.align_diag->max_weight_sum_err;
  report.max_unit_norm_err = engine.align_diag->max_unit_norm_err;
  report.min_aggregate_norm = engine.align_diag->min_embedding_norm;
  report.max_aggregate_norm = engine.align_diag->max_embedding_norm;
  return report;
}

SweepReport run_sweep(const RunConfig& config, const std::string& axis,
                      const std::vector<std::string>& values) {
  if (axis != "alpha" && axis != "beta" && axis != "k")
    throw ParamError("sweep axis must be alpha, beta or k, got " + axis);
  if (values.empty()) throw ParamError("sweep needs at least one value");
  ensure_dir(config.out_dir);

  SweepReport report;
  report.axis = axis;
  for (const auto& value : values) {
    RunConfig run = config;
    run.apply(axis == "k" ? "top_k" : axis, value, "flag");
    run.out_dir = config.out_dir + "/sweep_" + axis + "_" + value;
    BaseToNovelReport sub = run_base_to_novel(run);
    SweepRow row;
    row.value = value;
    row.base = sub.modes.front().base;
    row.novel = sub.modes.front().novel;
    row.hm = sub.modes.front().hm;
    report.rows.push_back(row);
  }

  std::string csv = config_header(config);
  csv += axis + ",base,novel,hm\n";
  for (const auto& r : report.rows)
    csv += r.value + "," + pct(r.base / 100.0) + "," + pct(r.novel / 100.0) + "," +
           pct(r.hm / 100.0) + "\n";
  report.csv_path = config.out_dir + "/sweep_" + axis + ".csv";
  write_file(report.csv_path, csv);
  return report;
}

TransferReport run_transfer_check(const RunConfig& config) {
  ensure_dir(config.out_dir);
  TransferReport report;
  for (int64_t i = 0; i < config.transfer_seeds; ++i) {
    const uint64_t seed = config.seed + static_cast<uint64_t>(i);
    Experiment exp = assemble_experiment(config, seed);
    TrainConfig tc{config.epochs, config.batch_size, config.learning_rate, seed, false};
    train(exp.model, exp.dataset, exp.split, tc);
    InferenceEngine<float> engine = InferenceEngine<float>::from_model(exp.model);

    const std::vector<int64_t> test_items = exp.split.all_test();
    const SplitCategories cats = split_categories(exp.model.registry);

    TransferSeedRow row;
    row.seed = seed;
    {
      EvalResult routed = evaluate_items(engine, exp.dataset, test_items,
                                         exp.registry_of_category, InferenceMode::kRouted);
      row.novel_routed = accuracy(predicted_of(routed), routed.truths, cats.unseen) * 100.0;
    }
    {
      EvalResult lbl = evaluate_items(engine, exp.dataset, test_items,
                                      exp.registry_of_category, InferenceMode::kLabelOnly);
      row.novel_label_only = accuracy(predicted_of(lbl), lbl.truths, cats.unseen) * 100.0;
    }
    row.win = row.novel_routed > row.novel_label_only;
    if (row.win) ++report.wins;
    report.rows.push_back(row);
  }
  report.p_value = sign_test_p_at_least(report.wins, config.transfer_seeds);

  std::string csv = config_header(config);
  csv += "seed,novel_label_only,novel_routed,win\n";
  for (const auto& r : report.rows)
    csv += std::to_string(r.seed) + "," + pct(r.novel_label_only / 100.0) + "," +
           pct(r.novel_routed / 100.0) + "," + (r.win ? "1" : "0") + "\n";
  csv += "# wins: " + std::to_string(report.wins) + " of " +
         std::to_string(config.transfer_seeds) +
         ", sign-test p = " + format_double(report.p_value) + "\n";
  report.csv_path = config.out_dir + "/transfer_check.csv";
  write_file(report.csv_path, csv);
  return report;
}

CrossDatasetReport run_cross_dataset(const RunConfig& config) {
  ensure_dir(config.out_dir);
  Experiment source = assemble_experiment(config, config.seed);
  TrainConfig tc{config.epochs, config.batch_size, config.learning_rate, config.seed, false};
  train(source.model, source.dataset, source.split, tc);
  InferenceEngine<float> source_engine = InferenceEngine<float>::from_model(source.model);

  CrossDatasetReport report;
  {
    const std::vector<int64_t> test_items = source.split.all_test();
    const SplitCategories cats = split_categories(source.model.registry);
    EvalResult routed = evaluate_items(source_engine, source.dataset, test_items,
                                       source.registry_of_category, InferenceMode::kRouted);
    report.source = metrics_for("routed", routed, cats);
  }

  if (!source.world.has_value())
    throw ParamError("cross-dataset protocol needs a synthetic source world");

  // Target world over the same attribute pool, fresh categories and images.
  SyntheticWorldSpec target_spec = config.world;
  target_spec.seed = source.world->spec.seed + 1000;
  SyntheticWorld target = generate_synthetic_world_with_pool(
      target_spec, source.world->attribute_vectors, source.world->attributes.attributes,
      "target");

  // Every target category is unseen; the trained parameters carry over.
  CategoryRegistry target_registry;
  for (const auto& name : target.dataset.categories) {
    target_registry.names.push_back(name);
    target_registry.seen.push_back(false);
  }
  target_registry.validate();

  EncoderConfig ec = config.encoder;
  Backend<float> target_backend = [&] {
    if (config.backend == "toy") {
      if (is_defaulted(config, "encoder.input_width")) ec.input_width = target_spec.embed_dim;
      return Backend<float>::toy(ec);
    }
    if (is_defaulted(config, "encoder.embed_dim")) ec.embed_dim = target_spec.embed_dim;
    EmbeddingBank merged(target_spec.embed_dim);
    for (const auto& key : target.image_bank.keys())
      merged.insert(key, target.image_bank.stored(key));
    for (const auto& key : target.text_bank.keys())
      merged.insert(key, target.text_bank.stored(key));
    return Backend<float>::precomputed(ec, std::move(merged));
  }();

  SemptModel<float> target_model =
      SemptModel<float>::build(hyper_from(config), target_registry, target.descriptions,
                               std::move(target_backend), config.seed);
  target_model.params = source.model.params;  // transfer the trained parameters
  InferenceEngine<float> target_engine = InferenceEngine<float>::from_model(target_model);

  std::vector<int64_t> all_items(target.dataset.items.size());
  for (size_t i = 0; i < all_items.size(); ++i) all_items[i] = static_cast<int64_t>(i);
  std::vector<int64_t> reg_of_cat(target.dataset.categories.size());
  for (size_t c = 0; c < reg_of_cat.size(); ++c)
    reg_of_cat[c] = target_registry.index_of(target.dataset.categories[c]);

  std::set<int64_t> all_cats;
  for (int64_t c = 0; c < target_registry.size(); ++c) all_cats.insert(c);
  {
    EvalResult routed = evaluate_items(target_engine, target.dataset, all_items, reg_of_cat,
                                       InferenceMode::kRouted);
    report.target_routed = accuracy(predicted_of(routed), routed.truths, all_cats) * 100.0;
  }
  {
    EvalResult lbl = evaluate_items(target_engine, target.dataset, all_items, reg_of_cat,
                                    InferenceMode::kLabelOnly);
    report.target_label_only = accuracy(predicted_of(lbl), lbl.truths, all_cats) * 100.0;
  }

  std::string csv = config_header(config);
  csv += "metric,value\n";
  csv += "source_base," + pct(report.source.base / 100.0) + "\n";
  csv += "source_novel," + pct(report.source.novel / 100.0) + "\n";
  csv += "source_hm," + pct(report.source.hm / 100.0) + "\n";
  csv += "target_routed," + pct(report.target_routed / 100.0) + "\n";
  csv += "target_label_only," + pct(report.target_label_only / 100.0) + "\n";
  report.csv_path = config.out_dir + "/cross_dataset.csv";
  write_file(report.csv_path, csv);
  return report;
}

FewShotReport run_few_shot(const RunConfig& config, const std::vector<int64_t>& shot_counts) {
  if (shot_counts.empty()) throw ParamError("few-shot needs at least one shot count");
  ensure_dir(config.out_dir);
  FewShotReport report;
  for (int64_t shots : shot_counts) {
    RunConfig run = config;
    run.apply("shots", std::to_string(shots), "flag");
    Experiment exp = assemble_experiment(run, run.seed);
    TrainConfig tc{run.epochs, run.batch_size, run.learning_rate, run.seed, false};
    train(exp.model, exp.dataset, exp.split, tc);
    InferenceEngine<float> engine = InferenceEngine<float>::from_model(exp.model);

    const std::vector<int64_t> test_items = exp.split.all_test();
    const SplitCategories cats = split_categories(exp.model.registry);
    EvalResult routed = evaluate_items(engine, exp.dataset, test_items,
                                       exp.registry_of_category, InferenceMode::kRouted);
    FewShotRow row;
    row.shots = shots;
    const ModeMetrics m = metrics_for("routed", routed, cats);
    row.base = m.base;
    row.novel = m.novel;
    row.hm = m.hm;
    std::set<int64_t> all_cats;
    for (int64_t c = 0; c < exp.model.registry.size(); ++c) all_cats.insert(c);
    row.overall = accuracy(predicted_of(routed), routed.truths, all_cats) * 100.0;
    report.rows.push_back(row);
  }

  std::string csv = config_header(config);
  csv += "shots,base,novel,hm,overall\n";
  for (const auto& r : report.rows)
    csv += std::to_string(r.shots) + "," + pct(r.base / 100.0) + "," + pct(r.novel / 100.0) +
           "," + pct(r.hm / 100.0) + "," + pct(r.overall / 100.0) + "\n";
  report.csv_path = config.out_dir + "/few_shot.csv";
  write_file(report.csv_path, csv);
  return report;
}

}  // namespace sempt
