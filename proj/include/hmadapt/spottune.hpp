#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "hmadapt/train.hpp"

namespace hmadapt {

// Small policy network: patch -> 2B logits (per block, a {reuse, finetune}
// pair). Two strided conv stages, global pooling, linear head.
struct PolicyParams {
  Tensor conv1;  // 1 -> 4, 3x3 stride 2
  NormParams norm1;
  Tensor conv2;  // 4 -> 8, 3x3 stride 2
  NormParams norm2;
  FcParams fc;   // 8 -> 2B
};

PolicyParams init_policy(int block_count, Rng& rng);
std::size_t policy_trainable_count(const PolicyParams& p);

struct SpotTuneNet {
  NetParams frozen;   // never updated; normalization always uses running stats
  NetParams tuned;    // trainable copy, starts as an exact clone
  PolicyParams policy;
  double temperature = 0.1;
};

SpotTuneNet make_spottune(const NetParams& base, double temperature, Rng& rng);

enum class RoutingMode {
  train,       // straight-through: hard routed forward, relaxed gradient
  train_soft,  // fully relaxed convex mix (differentiable end to end)
  eval,        // deterministic hard argmax of the policy logits, no noise
};

// Optional per-block override: entry -1 follows the policy, 0 forces the
// frozen path, 1 forces the tuned path. Empty means no overrides.
struct RoutingControl {
  std::vector<int> forced;

  static RoutingControl none() { return {}; }
  static RoutingControl all_frozen(int blocks) { return {std::vector<int>(blocks, 0)}; }
  static RoutingControl all_tuned(int blocks) { return {std::vector<int>(blocks, 1)}; }
};

struct SpotTuneBlockCache {
  BlockCache frozen, tuned;
  Tensor frozen_out, tuned_out;
  std::vector<double> r;       // per sample: mixing weight actually applied
  std::vector<double> r_soft;  // per sample: relaxed weight used for gradients
  std::vector<bool> routed;    // per sample: false when forced (no policy grad)
};

struct PolicyCache {
  Tensor conv1_out;
  NormCache norm1;
  Tensor relu1;
  Tensor conv2_out;
  NormCache norm2;
  Tensor relu2;
  Tensor pooled;
  Tensor logits;  // N x 2B
};

struct SpotTuneCache {
  RoutingMode mode = RoutingMode::eval;
  Tensor input;
  PolicyCache policy;
  Tensor stem_out;  // tuned stem (always the trainable copy)
  NormCache stem_norm;
  Tensor stem_relu;
  std::vector<SpotTuneBlockCache> blocks;
  Tensor pooled;
  Tensor logits;
};

// Standard Gumbel(0,1) draws, two per block per sample (N*B*2 values).
std::vector<double> gumbel_noise(int n, int blocks, Rng& rng);

// Forward pass. Train modes require noise (gumbel_noise-sized) except for
// blocks whose routing is forced; eval ignores noise. The stem and classifier
// head always come from the tuned copy; the frozen copy runs purely in
// eval-mode normalization.
Tensor spottune_forward(const SpotTuneNet& net, const Tensor& batch, RoutingMode mode,
                        const RoutingControl& control, const std::vector<double>* noise,
                        SpotTuneCache* cache);

struct SpotTuneGrads {
  NetParams tuned;
  PolicyParams policy;
};

// Gradients of mean cross-entropy w.r.t. the tuned copy and the policy.
// Routing gradients use the relaxed weights (straight-through in train mode).
// The frozen copy receives no gradient by construction.
SpotTuneGrads spottune_backward(const SpotTuneNet& net, const SpotTuneCache& cache,
                                const std::vector<int>& labels);

struct SpotTuneTrainResult {
  SpotTuneNet net;  // checkpoint with the best validation AUC
  int best_epoch = 0;
  double best_val_auc = 0.0;
  TrainHistory history;
};

// Joint Adam over tuned_params and policy_params (fine-tune defaults lr 5e-5,
// wd 1e-4); frozen_params stay bit-identical.
SpotTuneTrainResult spottune_train(const SpotTuneNet& net, PatchSource& data,
                                   const TrainOptions& opt);

std::vector<double> spottune_score_batch(const SpotTuneNet& net, const Tensor& batch);

struct PolicyStats {
  std::vector<double> finetune_probability;  // per block, mean of hard decisions
  std::int64_t sample_count = 0;
};

PolicyStats policy_stats(const SpotTuneNet& net, const Tensor& batch,
                         const RoutingControl& control = RoutingControl::none());
std::string policy_stats_to_csv(const PolicyStats& stats);

void save_spottune(const std::filesystem::path& path, const SpotTuneNet& net);
SpotTuneNet load_spottune(const std::filesystem::path& path);

}  // namespace hmadapt
