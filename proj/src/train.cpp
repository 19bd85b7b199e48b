#include "hmadapt/train.hpp"

#include <algorithm>
#include <stdexcept>

#include "hmadapt/errors.hpp"

namespace hmadapt {

void TrainOptions::validate() const {
  adam.validate();
  if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
  if (epoch_size < 1) throw std::invalid_argument("train: epoch_size must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
}

std::vector<double> score_batch(const NetParams& params, const Tensor& batch) {
  const Tensor logits = forward(params, batch, /*train=*/false, nullptr);
  const Tensor probs = softmax(logits);
  std::vector<double> scores(batch.n);
  for (int i = 0; i < batch.n; ++i) scores[i] = probs.at(i, 1, 0, 0);
  return scores;
}

ScoredSet score_set(const NetParams& params, const Tensor& batch,
                    const std::vector<int>& labels) {
  ScoredSet s;
  s.scores = score_batch(params, batch);
  s.labels = labels;
  return s;
}

namespace {

double val_auc_of(const NetParams& params, PatchSource& data) {
  std::vector<int> labels;
  const Tensor batch = data.val_batch(&labels);
  if (batch.n == 0) throw DataError("training: empty validation set");
  return roc_auc(score_set(params, batch, labels));
}

}  // namespace

TrainResult train(const NetParams& init, PatchSource& data, const TrainOptions& opt) {
  opt.validate();
  Rng rng(opt.seed);

  TrainResult result;
  result.params = init;
  result.best_epoch = 0;
  result.best_val_auc = val_auc_of(init, data);

  NetParams params = init;
  AdamState adam = make_adam(opt.adam, params);

  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    double loss_sum = 0.0;
    int steps = 0;
    int remaining = opt.epoch_size;
    while (remaining > 0) {
      const int bs = std::min(opt.batch_size, remaining);
      remaining -= bs;
      std::vector<int> labels;
      const Tensor batch = data.draw_train(bs, rng, &labels);
      ForwardCache cache;
      const Tensor logits = forward(params, batch, /*train=*/true, &cache);
      loss_sum += cross_entropy(logits, labels);
      ++steps;
      const NetParams grads = backward(params, cache, labels);
      adam_step(adam, params, grads);
      commit_running_stats(params, cache);
    }
    result.history.train_loss.push_back(loss_sum / steps);

    const double auc = val_auc_of(params, data);
    result.history.val_auc.push_back(auc);
    if (auc > result.best_val_auc) {
      result.best_val_auc = auc;
      result.best_epoch = epoch;
      result.params = params;
    }
  }
  return result;
}

TrainResult finetune_last_layer(const NetParams& base, PatchSource& data,
                                const TrainOptions& opt) {
  opt.validate();
  Rng rng(opt.seed);

  TrainResult result;
  result.params = base;
  result.best_epoch = 0;
  result.best_val_auc = val_auc_of(base, data);

  NetParams params = base;
  // Optimizer state only for the head; the backbone is untouched, so the
  // frozen contract holds bit-exactly by construction.
  const std::size_t head_count = params.fc.weight.size() + params.fc.bias.size();
  AdamState adam;
  adam.cfg = opt.adam;
  adam.m.assign(head_count, 0.0);
  adam.v.assign(head_count, 0.0);

  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    double loss_sum = 0.0;
    int steps = 0;
    int remaining = opt.epoch_size;
    while (remaining > 0) {
      const int bs = std::min(opt.batch_size, remaining);
      remaining -= bs;
      std::vector<int> labels;
      const Tensor batch = data.draw_train(bs, rng, &labels);
      // The backbone runs in eval mode: batch statistics stay frozen along
      // with the weights; only the head sees gradients.
      ForwardCache cache;
      const Tensor logits = forward(params, batch, /*train=*/false, &cache);
      loss_sum += cross_entropy(logits, labels);
      ++steps;
      const Tensor dlogits = cross_entropy_backward(logits, labels);
      std::vector<double> dweight(params.fc.weight.size(), 0.0);
      std::vector<double> dbias(params.fc.bias.size(), 0.0);
      fc_backward(cache.pooled, params.fc, dlogits, nullptr, &dweight, &dbias);
      ++adam.t;
      adam_update_span(adam.cfg, adam.t, std::span<double>(params.fc.weight),
                       std::span<const double>(dweight),
                       std::span<double>(adam.m).subspan(0, dweight.size()),
                       std::span<double>(adam.v).subspan(0, dweight.size()));
      adam_update_span(adam.cfg, adam.t, std::span<double>(params.fc.bias),
                       std::span<const double>(dbias),
                       std::span<double>(adam.m).subspan(dweight.size(), dbias.size()),
                       std::span<double>(adam.v).subspan(dweight.size(), dbias.size()));
    }
    result.history.train_loss.push_back(loss_sum / steps);

    const double auc = val_auc_of(params, data);
    result.history.val_auc.push_back(auc);
    if (auc > result.best_val_auc) {
      result.best_val_auc = auc;
      result.best_epoch = epoch;
      result.params = params;
    }
  }
  return result;
}

}  // namespace hmadapt
