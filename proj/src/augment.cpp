#include "hmadapt/augment.hpp"

#include <stdexcept>

namespace hmadapt {

void AugmentConfig::validate() const {
  if (flip_prob < 0.0 || flip_prob > 1.0)
    throw std::invalid_argument("AugmentConfig: flip_prob must be in [0, 1]");
  if (noise_sigma < 0.0 || translate_sigma < 0.0 || rotate_range_deg < 0.0)
    throw std::invalid_argument("AugmentConfig: sigmas and ranges must be >= 0");
  if (rotate_range_deg > 180.0)
    throw std::invalid_argument("AugmentConfig: rotate_range_deg must be <= 180");
}

Image2D augment(const Image2D& patch, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  Image2D out = patch;
  if (rng.uniform01() < cfg.flip_prob) out = flip_h(out);
  if (rng.uniform01() < cfg.flip_prob) out = flip_v(out);
  if (cfg.rotate_range_deg > 0.0) {
    const double angle = rng.uniform(-cfg.rotate_range_deg, cfg.rotate_range_deg);
    out = rotate(out, angle);
  }
  if (cfg.translate_sigma > 0.0) {
    const int dx = static_cast<int>(round_half_away(rng.normal(0.0, cfg.translate_sigma)));
    const int dy = static_cast<int>(round_half_away(rng.normal(0.0, cfg.translate_sigma)));
    out = translate(out, dx, dy);
  }
  if (cfg.noise_sigma > 0.0) out = add_gaussian_noise(out, cfg.noise_sigma, rng);
  return out;
}

}  // namespace hmadapt
