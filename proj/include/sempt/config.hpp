#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sempt/encoder.hpp"
#include "sempt/world.hpp"

namespace sempt {

// Fully resolved run configuration. Every key carries a provenance tag
// (default | file | flag); precedence is flags > file > defaults. The
// resolved map is serialized verbatim into every artifact the run writes.
struct RunConfig {
  // experiment
  uint64_t seed = 7;
  std::string backend = "precomputed";  // "toy" | "precomputed"
  std::string out_dir = "runs/default";
  std::string protocol = "base-to-novel";

  // hyperparameters
  double alpha = 0.2;
  double beta = 0.4;
  int64_t top_k = 2;
  double tau_loss = 0.07;
  double tau_align = 0.07;
  bool normalize_enhanced = true;
  bool loss_over_seen_only = false;

  // training
  int64_t epochs = 50;
  int64_t batch_size = 16;
  double learning_rate = 1e-3;
  int64_t shots = 16;

  // knowledge construction defaults
  int64_t ma = 16;
  int64_t s = 5;
  std::string knowledge_cache;

  // toy encoder
  EncoderConfig encoder;

  // synthetic world
  SyntheticWorldSpec world;

  // bank-backed data (overrides the synthetic world when set)
  std::string data_bank;
  std::string data_items;

  // reporting
  bool dump_diagnostics = false;
  bool ablate_embedding = false;
  int64_t transfer_seeds = 20;

  std::map<std::string, std::string> provenance;  // key -> default|file|flag

  // Set one key from its string form; unknown keys are an error.
  void apply(const std::string& key, const std::string& value, const std::string& origin);

  // TOML-style key/value file ([section] prefixes keys) or an embedded-config
  // JSON artifact header ({"values": {...}}).
  static RunConfig load(const std::string& path);
  static RunConfig from_values(const std::map<std::string, std::string>& values,
                               const std::string& origin);

  // Canonical string form of every key, used for serialization.
  std::map<std::string, std::string> values() const;
  std::string to_json() const;                    // values + provenance + version
  std::vector<std::string> header_lines() const;  // "# key = value" artifact header

  void validate() const;
};

}  // namespace sempt
