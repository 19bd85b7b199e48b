#pragma once

#include <vector>

#include "hmadapt/tensor.hpp"

namespace hmadapt {

// Convolution weights are Tensor(out_ch, in_ch, k, k); there is no bias term
// (the following normalization layer supplies the shift).
Tensor conv2d_forward(const Tensor& x, const Tensor& weight, int stride, int pad);
void conv2d_backward(const Tensor& x, const Tensor& weight, int stride, int pad,
                     const Tensor& dy, Tensor* dx, Tensor* dweight);

// Per-channel affine normalization. Training mode normalizes with batch
// statistics (biased variance) and reports updated running statistics in the
// cache without mutating the parameters; evaluation mode normalizes with the
// stored running statistics.
struct NormParams {
  std::vector<double> gamma, beta;
  std::vector<double> run_mean, run_var;
};

NormParams make_norm(int channels);

struct NormCache {
  bool train_mode = false;
  std::vector<double> inv_std;            // per channel
  Tensor xhat;                            // normalized input
  std::vector<double> new_run_mean, new_run_var;  // train mode only
};

Tensor norm_forward(const Tensor& x, const NormParams& p, bool train, double eps,
                    double momentum, NormCache* cache);
void norm_backward(const NormParams& p, const NormCache& cache, const Tensor& dy,
                   Tensor* dx, std::vector<double>* dgamma, std::vector<double>* dbeta);

Tensor relu_forward(const Tensor& x);
// dx is accumulated from dy masked by the sign of the cached input.
void relu_backward(const Tensor& x, const Tensor& dy, Tensor* dx);

Tensor global_avg_pool(const Tensor& x);  // N,C,1,1
void global_avg_pool_backward(const Tensor& x, const Tensor& dy, Tensor* dx);

struct FcParams {
  int in_dim = 0, out_dim = 0;
  std::vector<double> weight;  // out_dim x in_dim, row-major
  std::vector<double> bias;    // out_dim
};

// x is N,C,1,1 (pooled features); returns N,out_dim,1,1.
Tensor fc_forward(const Tensor& x, const FcParams& p);
void fc_backward(const Tensor& x, const FcParams& p, const Tensor& dy, Tensor* dx,
                 std::vector<double>* dweight, std::vector<double>* dbias);

// Row-wise softmax of logits (N,C,1,1).
Tensor softmax(const Tensor& logits);

}  // namespace hmadapt
