#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hmadapt/image.hpp"
#include "hmadapt/manifest.hpp"
#include "hmadapt/rng.hpp"

namespace hmadapt {

// Thresholded tissue map. `set_indices` lists the flat indices of set pixels
// so random in-mask draws are O(1) after the one segmentation pass.
struct ForegroundMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;
  std::vector<std::int32_t> set_indices;

  bool empty() const { return set_indices.empty(); }
};

struct PatchSpec {
  int crop_size = 1024;
  int out_size = 512;

  void validate() const;  // crop_size >= out_size >= 1
};

// Bit set iff pixel > threshold_fraction * (levels-1). The mask may be empty;
// sampling from an empty mask is the caller's data error.
ForegroundMask segment_foreground(const Image2D& img, double threshold_fraction);

// Annotated records use the annotation center, unannotated ones a uniformly
// random set pixel of the mask; either way the center is translated just far
// enough that the crop window fits inside the image. Throws DataError when
// the image is smaller than the crop or when an unannotated record meets an
// empty mask.
std::pair<int, int> choose_center(const ManifestRecord& record, const Image2D& img,
                                  const ForegroundMask& mask, const PatchSpec& spec,
                                  Rng& rng);

// Crops crop_size^2 around the (already clamped) center and downsamples to
// out_size^2. An out-of-bounds window is a logic error: choose_center
// guarantees the fit.
Image2D extract_patch(const Image2D& img, std::pair<int, int> center, const PatchSpec& spec);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

// Patient-level split. Counts follow the ratios by largest remainder, so no
// patient lands in two splits and fractions are exact where possible.
// Deterministic given the seed, independent of the input ordering.
std::map<std::string, Split> split_patients(const std::vector<std::string>& patient_ids,
                                            const SplitRatios& ratios, Rng& rng);

// Draws positive/negative with probability 1/2 each, then uniformly within
// the chosen class. Requires both classes present.
class TwoClassSampler {
 public:
  explicit TwoClassSampler(const std::vector<ManifestRecord>& records);

  const ManifestRecord& draw(Rng& rng) const;

  std::size_t positive_count() const { return positives_.size(); }
  std::size_t negative_count() const { return negatives_.size(); }

 private:
  const std::vector<ManifestRecord>* records_;
  std::vector<std::size_t> positives_;
  std::vector<std::size_t> negatives_;
};

}  // namespace hmadapt
