#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hmadapt/net.hpp"

namespace hmadapt {

struct AdamConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;  // coupled L2: added to the gradient

  void validate() const;
  bool operator==(const AdamConfig&) const = default;
};

// One flat slice of optimizer state. The update sequence per element is
//   g' = g + wd * w
//   m = b1*m + (1-b1)*g';  v = b2*v + (1-b2)*g'^2
//   mhat = m / (1 - b1^t); vhat = v / (1 - b2^t)
//   w -= lr * mhat / (sqrt(vhat) + eps)
// with t the 1-based step count after incrementing.
void adam_update_span(const AdamConfig& cfg, std::int64_t t, std::span<double> w,
                      std::span<const double> g, std::span<double> m, std::span<double> v);

// Optimizer state sized for one NetParams' trainable arrays in visit order.
struct AdamState {
  AdamConfig cfg;
  std::int64_t t = 0;
  std::vector<double> m, v;
};

AdamState make_adam(const AdamConfig& cfg, const NetParams& params);

// Applies one Adam step to every trainable parameter using the gradients in
// `grads` (a NetParams-shaped container from backward()).
void adam_step(AdamState& state, NetParams& params, const NetParams& grads);

// Variant that only updates parameters whose name passes `keep`; bypassed
// slots keep their m/v untouched and their weights frozen.
void adam_step_filtered(AdamState& state, NetParams& params, const NetParams& grads,
                        const std::function<bool(const std::string&)>& keep);

}  // namespace hmadapt
