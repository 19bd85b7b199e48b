#pragma once

#include <cstdint>
#include <vector>

#include "hmadapt/adam.hpp"
#include "hmadapt/metrics.hpp"
#include "hmadapt/net.hpp"
#include "hmadapt/rng.hpp"

namespace hmadapt {

// Supplies training batches and fixed evaluation sets; implementations wrap
// the manifest/patch pipeline or synthetic in-memory data.
class PatchSource {
 public:
  virtual ~PatchSource() = default;
  // Draws `count` training samples (balanced two-class sampling + augmentation
  // live behind this call). Appends labels for each sample.
  virtual Tensor draw_train(int count, Rng& rng, std::vector<int>* labels) = 0;
  // The full validation set in a fixed order (deterministic patches).
  virtual Tensor val_batch(std::vector<int>* labels) = 0;
};

struct TrainOptions {
  AdamConfig adam;            // base training default: lr 5e-5, wd 5e-4
  int epochs = 10;
  int epoch_size = 2000;      // samples shown per epoch
  int batch_size = 16;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> train_loss;  // mean over each epoch's steps
  std::vector<double> val_auc;     // after each epoch
};

struct TrainResult {
  NetParams params;   // checkpoint with the best validation AUC
  int best_epoch = 0; // 1-based; 0 means the initialization was best
  double best_val_auc = 0.0;
  TrainHistory history;
};

// Scores: probability of class 1 from eval-mode forward.
std::vector<double> score_batch(const NetParams& params, const Tensor& batch);
ScoredSet score_set(const NetParams& params, const Tensor& batch,
                    const std::vector<int>& labels);

// Trains from the given initialization. Model selection keeps the checkpoint
// whose validation AUC is highest; ties keep the earlier epoch. Also scores
// the initialization so zero-epoch runs return it unchanged.
TrainResult train(const NetParams& init, PatchSource& data, const TrainOptions& opt);

// Re-trains only the final fully-connected layer; every other parameter and
// all normalization statistics stay bit-identical to `base`.
TrainResult finetune_last_layer(const NetParams& base, PatchSource& data,
                                const TrainOptions& opt);

}  // namespace hmadapt
