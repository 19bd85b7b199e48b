#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hmadapt/augment.hpp"
#include "hmadapt/net.hpp"
#include "hmadapt/patch.hpp"
#include "hmadapt/synth.hpp"

namespace hmadapt {

enum class FinetuneMode { test_only, last_layer, spottune };

const char* to_string(FinetuneMode m);
FinetuneMode finetune_mode_from_string(const std::string& s);

struct DataPaths {
  std::filesystem::path source_manifest;
  std::filesystem::path target_manifest;
  std::filesystem::path source_image_root;
  std::filesystem::path target_image_root;
};

struct TrainSection {
  double lr = 5e-5;
  double weight_decay = 5e-4;
  int epochs = 10;
  int epoch_size = 2000;
  int batch_size = 16;
};

struct FinetuneSection {
  double lr = 5e-5;
  double weight_decay = 1e-4;
  int epochs = 5;
  int epoch_size = 2000;
  int batch_size = 16;
  double temperature = 0.1;  // routing relaxation temperature
};

struct HmSection {
  bool enabled = true;
  int sample_count = 48;  // images per domain for the average CDF
};

// One experiment = one JSON file. Relative paths resolve against the config
// file's directory; HMADAPT_OUTPUT_ROOT overrides output_root when set.
struct ExperimentConfig {
  std::filesystem::path output_root;
  DataPaths data;
  PatchSpec patch;
  double foreground_threshold = 0.02;
  AugmentConfig augment;
  NetConfig net;
  TrainSection train;
  FinetuneSection finetune;
  HmSection hm;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::optional<SyntheticDomainSpec> synth;

  void validate() const;  // ConfigError with the offending field path
};

ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig config_from_json(const std::string& text,
                                  const std::filesystem::path& base_dir);

// Lossless round-trip of every field, for run-metadata emission.
std::string config_to_json(const ExperimentConfig& cfg);

}  // namespace hmadapt
