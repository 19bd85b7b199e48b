#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "hmadapt/histmatch.hpp"
#include "hmadapt/image.hpp"
#include "hmadapt/manifest.hpp"
#include "hmadapt/rng.hpp"

namespace hmadapt {

struct SynthClassCounts {
  int normal = 0;
  int benign = 0;
  int high_risk = 0;
  int malignant = 0;

  int total() const { return normal + benign + high_risk + malignant; }
};

// Two paired domains of half-ellipse tissue images. Finding classes add a
// Gaussian blob whose contrast carries the label; the target domain is the
// source image pushed through a monotone intensity warp (gamma + bias), so
// the domain shift is exactly the global remap histogram matching models.
struct SyntheticDomainSpec {
  int image_size = 256;
  int levels = 4096;
  double gamma = 2.2;  // target warp exponent; 1.0 = identity
  int bias = 0;        // target additive offset in levels

  SynthClassCounts train{30, 30, 30, 30};
  SynthClassCounts val{10, 10, 10, 10};
  SynthClassCounts test{20, 20, 20, 20};

  // Tissue base intensity range as a fraction of (levels-1). The spread is
  // what makes the gamma warp destructive: after warping, a strong blob on a
  // dark base and a weak blob on a bright base land on overlapping contrasts.
  double base_lo = 0.25, base_hi = 0.45;
  double texture_amp = 0.02;  // smooth texture amplitude, fraction of range
  double benign_contrast_lo = 0.05, benign_contrast_hi = 0.08;
  double malign_contrast_lo = 0.12, malign_contrast_hi = 0.18;
  double blob_sigma_lo = 6.0, blob_sigma_hi = 10.0;  // pixels
  double noise_sigma = 2.0;  // acquisition noise in levels

  void validate() const;
};

// The warp as an integer lookup table over [0, levels-1]; nondecreasing, and
// strictly increasing wherever rounding does not collapse adjacent levels.
std::vector<std::uint16_t> synth_warp_lut(const SyntheticDomainSpec& spec);

struct SynthImage {
  Image2D image;
  Class4 cls = Class4::normal;
  std::optional<AnnotationBox> annotation;
};

// One source-domain image; `content` drives every random choice.
SynthImage synth_source_image(const SyntheticDomainSpec& spec, Class4 cls, Rng& content);

struct SynthDataset {
  std::vector<ManifestRecord> source_manifest;
  std::vector<ManifestRecord> target_manifest;
};

// Writes out_root/{source,target}/images/*.pgm and the two manifests
// (out_root/{source,target}/manifest.jsonl). Patient ids, labels, splits, and
// annotations are shared between domains; rerunning with the same seed
// produces byte-identical trees.
SynthDataset synth_generate(const SyntheticDomainSpec& spec, std::uint64_t seed,
                            const std::filesystem::path& out_root);

}  // namespace hmadapt
