#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hmadapt/layers.hpp"
#include "hmadapt/rng.hpp"
#include "hmadapt/tensor.hpp"

namespace hmadapt {

// Residual classifier shape. The defaults are the desk-scale configuration;
// a production-scale shape (512 input, wider stages) is expressible through
// the same fields.
struct NetConfig {
  int input_size = 64;
  int block_count = 6;
  std::vector<int> stage_channels = {8, 16, 32};
  int classes = 2;
  int stem_stride = 2;
  double norm_eps = 1e-5;
  double norm_momentum = 0.1;

  void validate() const;
  int total_stride() const;
  bool operator==(const NetConfig&) const = default;
};

// Geometry of one residual block as derived from the config.
struct BlockPlan {
  int in_ch = 0;
  int out_ch = 0;
  int stride = 1;
  bool has_proj = false;  // 1x1 shortcut projection when shape changes
};

std::vector<BlockPlan> plan_blocks(const NetConfig& cfg);

struct BlockParams {
  Tensor conv1, conv2;  // 3x3 kernels
  NormParams norm1, norm2;
  Tensor proj;  // 1x1, present iff plan.has_proj
  NormParams proj_norm;
};

struct NetParams {
  NetConfig config;
  Tensor stem;  // 3x3, 1 -> stage_channels[0]
  NormParams stem_norm;
  std::vector<BlockParams> blocks;
  FcParams fc;
};

// Fan-in-scaled uniform init for convolutions and the classifier head,
// identity affine for the normalization layers. Deterministic per seed.
NetParams init_net(const NetConfig& cfg, Rng& rng);

// Correctly-shaped parameters with conv kernels zeroed and fresh norm state;
// used as a load target.
NetParams make_net_shell(const NetConfig& cfg);

// Applies `fn` to every trainable array (conv kernels, norm gamma/beta, fc
// weight/bias) in a fixed order shared by gradients and optimizer state.
// Normalization running statistics are state, not trainable parameters.
void visit_trainable(NetParams& params,
                     const std::function<void(const std::string&, std::vector<double>&)>& fn);
void visit_trainable(const NetParams& params,
                     const std::function<void(const std::string&, const std::vector<double>&)>& fn);
std::size_t trainable_count(const NetParams& params);

// Every array including running statistics, for serialization and hashing.
void visit_all(const NetParams& params,
               const std::function<void(const std::string&, const std::vector<double>&)>& fn);
void visit_all(NetParams& params,
               const std::function<void(const std::string&, std::vector<double>&)>& fn);

struct BlockCache {
  Tensor input;
  Tensor conv1_out;
  NormCache norm1;
  Tensor relu1_out;
  Tensor conv2_out;
  NormCache norm2;
  Tensor proj_out;
  NormCache proj_norm;
  Tensor sum_out;  // pre-activation of the block output
};

struct ForwardCache {
  bool train_mode = false;
  Tensor input;
  Tensor stem_out;
  NormCache stem_norm;
  Tensor stem_relu;
  std::vector<BlockCache> blocks;
  Tensor pooled;
  Tensor logits;
};

// Batch is N,1,S,S with intensities already scaled to [0,1]. When `cache` is
// null only the logits are produced. The forward pass never mutates params;
// training-mode running-statistic updates are reported through the cache and
// applied by commit_running_stats.
Tensor forward(const NetParams& params, const Tensor& batch, bool train,
               ForwardCache* cache);

void commit_running_stats(NetParams& params, const ForwardCache& cache);

// Mean over the batch of -log softmax(logits)[label].
double cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Gradient of mean cross-entropy w.r.t. the logits: (softmax - onehot)/N.
Tensor cross_entropy_backward(const Tensor& logits, const std::vector<int>& labels);

// Gradients of the mean cross-entropy loss w.r.t. every trainable parameter,
// returned in a NetParams-shaped container (running-stat slots unused).
// When dinput is non-null the gradient w.r.t. the batch is written there.
NetParams backward(const NetParams& params, const ForwardCache& cache,
                   const std::vector<int>& labels, Tensor* dinput = nullptr);

// Block-level primitives shared with the routed two-copy network.
Tensor block_forward(const BlockParams& p, const BlockPlan& plan, const Tensor& x,
                     bool train, double eps, double momentum, BlockCache* cache);
// dy is the gradient at the block output. Returns gradient w.r.t. the block
// input; parameter gradients accumulate into *gp when non-null.
Tensor block_backward(const BlockParams& p, const BlockPlan& plan, const BlockCache& cache,
                      const Tensor& dy, BlockParams* gp);

NetParams zero_like(const NetParams& params);

}  // namespace hmadapt
