#pragma once

#include <cstdint>
#include <string>

#include "splitsc/data.hpp"

namespace splitsc {

struct SnrPolicy {
  double low = 5.0;
  double high = 20.0;
  bool fixed() const { return low == high; }
};

struct ModelConfig {
  int bits = 96;     // M, interface width
  int symbols = 24;  // L, complex channel uses per image
  std::string backbone = "mlp";  // mlp | transformer
  int source_dim = 256;
  int source_blocks = 2;
  int source_heads = 4;
  int patch = 2;   // transformer backbone: patch edge
  int window = 4;  // transformer backbone: tokens per attention window
  int channel_dim = 48;
  int channel_blocks = 2;
  int channel_heads = 4;
  int group_bits = 8;  // bits per channel-mapper token
};

struct TrainingConfig {
  double lr_stage1 = 1e-4;
  double lr_stage2 = 0.0;  // 0 = resolved by channel type at load
  int batch = 128;
  int epochs_stage1 = 40;
  int epochs_stage2 = 30;
  int val_images = 64;  // cap on images used for per-epoch validation
};

struct ExperimentConfig {
  int schema_version = 1;
  DatasetSpec dataset;
  ModelConfig model;
  double cbr_target = 0.125;
  std::string channel = "awgn";  // awgn | rayleigh
  SnrPolicy snr;
  double lambda = 1.0;
  TrainingConfig training;
  std::uint64_t seed = 1;
  std::string output_dir = "runs/exp";
  std::string ablation = "full";
};

// Parse + default-fill + validate. Any problem is reported with the offending
// field's name. `root` resolves relative dataset paths (may be empty).
ExperimentConfig load_config(const std::string& path, const std::string& root);
ExperimentConfig parse_config(const std::string& text, const std::string& root);

void validate_config(const ExperimentConfig& cfg, const std::string& root);

// All defaults materialized, keys sorted: the self-describing form embedded
// in manifests. Equal configs always produce equal text.
std::string canonical_json(const ExperimentConfig& cfg);
std::uint64_t config_hash(const ExperimentConfig& cfg);

// Hash of only the fields stage-1 training depends on (dataset, source model
// sizing, lambda, stage-1 schedule, seed). A stage-2 config is compatible
// with stage-1 artifacts iff these agree; channel-side fields may differ.
std::uint64_t stage1_hash(const ExperimentConfig& cfg);

}  // namespace splitsc
