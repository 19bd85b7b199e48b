#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hmadapt/config.hpp"
#include "hmadapt/histmatch.hpp"
#include "hmadapt/metrics.hpp"
#include "hmadapt/pgm_io.hpp"
#include "hmadapt/spottune.hpp"
#include "hmadapt/train.hpp"

namespace hmadapt {

// Reads images relative to a root directory, caching decoded pixels. When a
// remap table is supplied every image is histogram-matched at load, so the
// rest of the pipeline never knows whether HM is on.
class ImageStore {
 public:
  explicit ImageStore(std::filesystem::path root,
                      std::optional<HmLut> lut = std::nullopt);

  const Image2D& get(const std::string& rel_path);

 private:
  std::filesystem::path root_;
  std::optional<HmLut> lut_;
  std::map<std::string, Image2D> cache_;
};

struct PatchSettings {
  PatchSpec spec;
  double foreground_threshold = 0.02;
};

// Record -> patch, with per-image foreground masks cached across calls.
class PatchPipeline {
 public:
  PatchPipeline(ImageStore& store, PatchSettings settings);

  Image2D extract(const ManifestRecord& rec, Rng& rng);

  const PatchSettings& settings() const { return settings_; }

 private:
  ImageStore* store_;
  PatchSettings settings_;
  std::map<std::string, ForegroundMask> masks_;
};

// N x 1 x S x S batch with intensities scaled into [0,1] by each patch's
// (levels-1).
Tensor patches_to_batch(const std::vector<Image2D>& patches);

// One patch per record: annotated records are deterministic, unannotated
// placement follows the seed. Labels are the binary mapping of class4.
Tensor make_eval_batch(PatchPipeline& pipe, const std::vector<ManifestRecord>& records,
                       std::uint64_t seed, std::vector<int>* labels);

// Balanced-sampling training source over one manifest's train and val splits.
class ManifestPatchSource : public PatchSource {
 public:
  ManifestPatchSource(PatchPipeline& pipe, const std::vector<ManifestRecord>& records,
                      const AugmentConfig& aug, std::uint64_t val_seed);

  Tensor draw_train(int count, Rng& rng, std::vector<int>* labels) override;
  Tensor val_batch(std::vector<int>* labels) override;

 private:
  PatchPipeline* pipe_;
  std::vector<ManifestRecord> train_, val_;
  std::optional<TwoClassSampler> sampler_;
  AugmentConfig aug_;
  std::uint64_t val_seed_;
  std::optional<Tensor> val_cache_;
  std::vector<int> val_labels_;
};

std::vector<ManifestRecord> records_in_split(const std::vector<ManifestRecord>& records,
                                             Split split);

// Stratified average CDF over a manifest subset.
Cdf domain_average_cdf(ImageStore& store, const std::vector<ManifestRecord>& records,
                       int sample_count, std::uint64_t seed);

// ---------------- command layer ----------------
// Each cmd_* is the whole behavior of one CLI subcommand; the binary only
// parses arguments and maps exceptions to exit codes. All outputs are
// deterministic functions of config + seeds (no timestamps), so reruns are
// byte-identical.

struct SplitArgs {
  std::filesystem::path manifest_in;
  std::filesystem::path manifest_out;
  SplitRatios ratios;
  std::uint64_t seed = 1;
};
void cmd_split(const SplitArgs& args);

struct CdfArgs {
  std::filesystem::path manifest;
  std::filesystem::path image_root;
  std::filesystem::path out_path;
  int sample_count = 48;
  std::uint64_t seed = 1;
  std::optional<Split> split = Split::train;  // nullopt = whole manifest
};
void cmd_cdf(const CdfArgs& args);

struct MatchArgs {
  std::filesystem::path manifest;
  std::filesystem::path image_root;
  std::filesystem::path source_cdf;
  std::filesystem::path reference_cdf;
  std::filesystem::path out_dir;
};
void cmd_match(const MatchArgs& args);

struct MipArgs {
  std::filesystem::path volume_dir;
  std::filesystem::path out_path;
};
void cmd_mip(const MipArgs& args);

struct PatchifyArgs {
  std::filesystem::path manifest;
  std::filesystem::path image_root;
  std::filesystem::path out_dir;
  PatchSettings settings;
  std::uint64_t seed = 1;
};
void cmd_patchify(const PatchifyArgs& args);

void cmd_synth(const ExperimentConfig& cfg);
void cmd_train(const ExperimentConfig& cfg);
void cmd_finetune(const ExperimentConfig& cfg, FinetuneMode mode, bool hm);
EvalReport cmd_eval(const ExperimentConfig& cfg, FinetuneMode mode,
                    const std::string& domain, bool hm);
void cmd_report(const ExperimentConfig& cfg);

void write_run_meta(const ExperimentConfig& cfg, const std::string& command);

// Builds (and persists under output_root/hm/) the target->source remap from
// the two domains' train-split average CDFs.
HmLut target_to_source_lut(const ExperimentConfig& cfg);

std::filesystem::path base_checkpoint_path(const ExperimentConfig& cfg,
                                           std::uint64_t seed);
std::filesystem::path adapted_checkpoint_path(const ExperimentConfig& cfg,
                                              FinetuneMode mode, bool hm,
                                              std::uint64_t seed);

}  // namespace hmadapt
