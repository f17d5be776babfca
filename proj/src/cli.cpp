#include "sempt/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>

#include "CLI11.hpp"
#include "sempt/bank.hpp"
#include "sempt/checkpoint.hpp"
#include "sempt/config.hpp"
#include "sempt/errors.hpp"
#include "sempt/knowledge.hpp"
#include "sempt/llm_client.hpp"
#include "sempt/runner.hpp"
#include "sempt/selftest.hpp"
#include "sempt/strings.hpp"
#include "sempt/version.hpp"

namespace sempt::cli {

namespace {

using OverrideMap = std::map<std::string, std::string>;

std::vector<std::string> read_lines_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open file: " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

RunConfig load_config(const std::string& path, const OverrideMap& overrides) {
  RunConfig cfg;
  if (!path.empty()) {
    if (!std::filesystem::exists(path))
      throw UsageError("config file not found: " + path);
    cfg = RunConfig::load(path);
  }
  for (const auto& [key, value] : overrides) cfg.apply(key, value, "flag");
  cfg.validate();
  return cfg;
}

// Hyperparameter/knob flags shared by train, eval and sweep.
void add_override_flags(CLI::App* cmd, const std::shared_ptr<OverrideMap>& store) {
  auto opt = [cmd, store](const char* flag, const char* key, const char* help) {
    cmd->add_option_function<std::string>(
        flag, [store, key](const std::string& v) { (*store)[key] = v; }, help);
  };
  auto flag = [cmd, store](const char* name, const char* key, const char* help) {
    cmd->add_flag_callback(name, [store, key]() { (*store)[key] = "true"; }, help);
  };
  opt("--seed", "seed", "run seed");
  opt("--alpha", "alpha", "residual blend weight in [0,1]");
  opt("--beta", "beta", "loss mixing weight in [0,1]");
  opt("--k", "top_k", "descriptions kept per category");
  opt("--tau-loss", "tau_loss", "classification temperature");
  opt("--tau-align", "tau_align", "alignment softmax temperature");
  opt("--epochs", "epochs", "training epochs");
  opt("--batch-size", "batch_size", "training batch size");
  opt("--lr", "learning_rate", "Adam learning rate");
  opt("--shots", "shots", "training shots per seen category");
  opt("--out-dir", "out_dir", "output directory");
  opt("--backend", "backend", "toy | precomputed");
  flag("--loss-over-seen-only", "loss_over_seen_only",
       "normalize the training softmax over seen categories only");
  flag("--ablate-embedding", "ablate_embedding",
       "also report label-only and enhanced-for-all inference");
  flag("--diagnostics", "dump_diagnostics", "dump per-image alignment CSVs");
}

int cmd_knowledge(const std::string& categories_path, const std::string& out_path, bool stub,
                  uint64_t seed, int64_t ma, int64_t s, const std::string& step1_path,
                  const std::string& step2_path) {
  const std::vector<std::string> categories = read_lines_file(categories_path);
  KnowledgeResult result;
  if (stub) {
    result = stub_generate(seed, categories, ma, s);
    save_knowledge_cache(out_path, result, ma, s);
  } else {
    PromptTemplate step1 = default_step1_template();
    PromptTemplate step2 = default_step2_template();
    if (!step1_path.empty()) step1.text = join(read_lines_file(step1_path), "\n");
    if (!step2_path.empty()) step2.text = join(read_lines_file(step2_path), "\n");
    auto client = HttpLlmClient::from_env();
    result = discover_and_generate(*client, categories, ma, s, out_path, step1, step2);
  }
  std::cout << "wrote " << out_path << ": " << result.vocabulary.attributes.size()
            << " attributes, " << result.descriptions.categories.size() << " categories x "
            << result.descriptions.per_category() << " descriptions\n";
  return 0;
}

int cmd_train(const std::string& config_path, const OverrideMap& overrides) {
  const RunConfig cfg = load_config(config_path, overrides);
  const TrainRunReport report = run_train(cfg);
  std::cout << "trained " << report.state.epochs_run << " epochs ("
            << report.state.steps << " steps), final loss "
            << format_float(report.state.history.back().total) << "\n";
  std::cout << "checkpoint: " << report.checkpoint_path << "\n";
  std::cout << "train log:  " << report.log_path << "\n";
  return 0;
}

int cmd_predict(const std::string& checkpoint_path, const std::string& images_path,
                const std::string& out_path, const std::string& mode_name) {
  InferenceMode mode = InferenceMode::kRouted;
  if (mode_name == "label_only")
    mode = InferenceMode::kLabelOnly;
  else if (mode_name == "enhanced_all")
    mode = InferenceMode::kEnhancedAll;
  else if (mode_name != "routed")
    throw UsageError("unknown mode: " + mode_name);

  const InferenceEngine<float> engine = load_checkpoint(checkpoint_path);
  const RunConfig cfg = checkpoint_config(checkpoint_path);
  const EmbeddingBank bank = EmbeddingBank::load(images_path);

  std::string csv;
  for (const auto& line : cfg.header_lines()) csv += line + "\n";
  csv += "image_id,predicted_category,is_unseen_route,sim1,sim2,sim3\n";
  for (const auto& key : bank.keys()) {
    const std::vector<float> v =
        engine.encoder ? engine.embed_features(bank.stored(key)) : bank.lookup(key);
    const Prediction pred = engine.predict(v, mode);
    std::vector<double> sims = pred.similarities;
    std::sort(sims.begin(), sims.end(), std::greater<double>());
    csv += key + "," + engine.registry.names[static_cast<size_t>(pred.category)] + "," +
           (pred.unseen_route ? "1" : "0");
    for (size_t i = 0; i < 3 && i < sims.size(); ++i) csv += "," + format_float(sims[i]);
    csv += "\n";
  }
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + out_path);
  out << csv;
  std::cout << "wrote " << out_path << " (" << bank.size() << " predictions)\n";
  return 0;
}

int cmd_eval(const std::string& config_path, const OverrideMap& overrides,
             const std::string& protocol_flag) {
  RunConfig cfg = load_config(config_path, overrides);
  if (!protocol_flag.empty()) cfg.apply("protocol", protocol_flag, "flag");
  cfg.validate();

  if (cfg.protocol == "base-to-novel") {
    const BaseToNovelReport report = run_base_to_novel(cfg);
    std::printf("%-14s %8s %8s %8s\n", "mode", "Base", "Novel", "HM");
    for (const auto& m : report.modes)
      std::printf("%-14s %8.2f %8.2f %8.2f\n", m.mode.c_str(), m.base, m.novel, m.hm);
    std::cout << "report: " << report.report_csv_path << "\n";
    return 0;
  }
  if (cfg.protocol == "transfer-check") {
    const TransferReport report = run_transfer_check(cfg);
    std::printf("enhanced routing beats label-only on novel items in %lld of %lld seeds "
                "(sign-test p = %.4g)\n",
                static_cast<long long>(report.wins),
                static_cast<long long>(cfg.transfer_seeds), report.p_value);
    std::cout << "report: " << report.csv_path << "\n";
    return 0;
  }
  if (cfg.protocol == "cross-dataset") {
    const CrossDatasetReport report = run_cross_dataset(cfg);
    std::printf("source base/novel/hm: %.2f / %.2f / %.2f\n", report.source.base,
                report.source.novel, report.source.hm);
    std::printf("target accuracy: routed %.2f, label-only %.2f\n", report.target_routed,
                report.target_label_only);
    std::cout << "report: " << report.csv_path << "\n";
    return 0;
  }
  if (cfg.protocol == "few-shot") {
    const FewShotReport report = run_few_shot(cfg);
    std::printf("%6s %8s %8s %8s %8s\n", "shots", "Base", "Novel", "HM", "Overall");
    for (const auto& r : report.rows)
      std::printf("%6lld %8.2f %8.2f %8.2f %8.2f\n", static_cast<long long>(r.shots), r.base,
                  r.novel, r.hm, r.overall);
    std::cout << "report: " << report.csv_path << "\n";
    return 0;
  }
  throw UsageError("unknown protocol: " + cfg.protocol);
}

int cmd_sweep(const std::string& config_path, const OverrideMap& overrides,
              const std::string& axis, const std::string& values_csv) {
  const RunConfig cfg = load_config(config_path, overrides);
  std::vector<std::string> values;
  size_t start = 0;
  for (size_t i = 0; i <= values_csv.size(); ++i) {
    if (i == values_csv.size() || values_csv[i] == ',') {
      const std::string v = trim(values_csv.substr(start, i - start));
      if (!v.empty()) values.push_back(v);
      start = i + 1;
    }
  }
  const SweepReport report = run_sweep(cfg, axis, values);
  std::printf("%10s %8s %8s %8s\n", report.axis.c_str(), "Base", "Novel", "HM");
  for (const auto& r : report.rows)
    std::printf("%10s %8.2f %8.2f %8.2f\n", r.value.c_str(), r.base, r.novel, r.hm);
  std::cout << "report: " << report.csv_path << "\n";
  return 0;
}

int cmd_selftest() {
  const std::vector<SelfTestResult> results = run_selftest();
  bool all_pass = true;
  for (const auto& r : results) {
    std::printf("[%s] %s%s%s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                r.detail.empty() ? "" : " — ", r.detail.c_str());
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 2;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"semantic prompt tuning experiment harness"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  // knowledge
  auto* knowledge = app.add_subcommand("knowledge", "build the attribute knowledge cache");
  std::string categories_path, cache_out;
  bool stub = false;
  uint64_t kn_seed = 0;
  int64_t ma = 16, s = 5;
  std::string step1_path, step2_path;
  knowledge->add_option("--categories", categories_path, "category file, one name per line")
      ->required();
  knowledge->add_option("--out", cache_out, "cache file to write")->required();
  knowledge->add_flag("--stub", stub, "offline deterministic generation");
  knowledge->add_option("--seed", kn_seed, "stub seed");
  knowledge->add_option("--ma", ma, "attribute count");
  knowledge->add_option("--s", s, "descriptions per category");
  knowledge->add_option("--step1-template", step1_path, "override step-1 prompt template");
  knowledge->add_option("--step2-template", step2_path, "override step-2 prompt template");

  // train
  auto* train_cmd = app.add_subcommand("train", "train prompts and the fusion head");
  std::string train_config;
  auto train_overrides = std::make_shared<OverrideMap>();
  train_cmd->add_option("--config", train_config, "run configuration file");
  add_override_flags(train_cmd, train_overrides);

  // predict
  auto* predict = app.add_subcommand("predict", "classify an embedding bank");
  std::string ckpt_path, images_path, preds_out, mode_name = "routed";
  predict->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
  predict->add_option("--images", images_path, "SEMB bank of images")->required();
  predict->add_option("--out", preds_out, "prediction CSV to write")->required();
  predict->add_option("--mode", mode_name, "routed | label_only | enhanced_all");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "run an evaluation protocol");
  std::string eval_config, protocol_flag;
  auto eval_overrides = std::make_shared<OverrideMap>();
  eval_cmd->add_option("--config", eval_config, "run configuration file");
  eval_cmd->add_option("--protocol", protocol_flag,
                       "base-to-novel | cross-dataset | few-shot | transfer-check");
  add_override_flags(eval_cmd, eval_overrides);

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "ablation sweep over one hyperparameter");
  std::string sweep_config, axis, values_csv;
  auto sweep_overrides = std::make_shared<OverrideMap>();
  sweep_cmd->add_option("--config", sweep_config, "run configuration file");
  sweep_cmd->add_option("--axis", axis, "alpha | beta | k")->required();
  sweep_cmd->add_option("--values", values_csv, "comma-separated values")->required();
  add_override_flags(sweep_cmd, sweep_overrides);

  // selftest
  app.add_subcommand("selftest", "run built-in gradient checks and oracle suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, returns 0
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (knowledge->parsed())
      return cmd_knowledge(categories_path, cache_out, stub, kn_seed, ma, s, step1_path,
                           step2_path);
    if (train_cmd->parsed()) return cmd_train(train_config, *train_overrides);
    if (predict->parsed()) return cmd_predict(ckpt_path, images_path, preds_out, mode_name);
    if (eval_cmd->parsed()) return cmd_eval(eval_config, *eval_overrides, protocol_flag);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_config, *sweep_overrides, axis, values_csv);
    if (app.get_subcommand("selftest")->parsed()) return cmd_selftest();
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace sempt::cli
