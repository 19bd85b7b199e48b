#pragma once

#include "hmadapt/image.hpp"
#include "hmadapt/rng.hpp"

namespace hmadapt {

struct AugmentConfig {
  double flip_prob = 0.5;          // per axis
  double noise_sigma = 1.0;        // intensity levels
  double translate_sigma = 20.0;   // pixels, per axis
  double rotate_range_deg = 30.0;  // uniform in [-range, +range]

  void validate() const;
};

// Stochastic training-time transform. Applies, in this order: horizontal
// flip, vertical flip, rotation, translation (per-axis Gaussian rounded to
// integer pixels), additive Gaussian noise. Each component is sampled
// independently; a zeroed config returns the patch bit-identical.
Image2D augment(const Image2D& patch, const AugmentConfig& cfg, Rng& rng);

}  // namespace hmadapt
