#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "hmadapt/image.hpp"
#include "hmadapt/manifest.hpp"
#include "hmadapt/rng.hpp"

namespace hmadapt {

// Normalized cumulative intensity distribution. values[v] is the fraction of
// pixels at or below level v; nondecreasing with values.back() == 1.
struct Cdf {
  std::vector<double> values;

  int levels() const { return static_cast<int>(values.size()); }
  // Checks monotonicity and the unit tail; snaps values.back() to exactly 1.0
  // when it is within 1e-12. Throws std::invalid_argument otherwise.
  void validate();
};

// Monotone pixel-value remapping table from a source intensity grid to a
// reference grid.
struct HmLut {
  std::uint32_t source_levels = 0;
  std::uint32_t target_levels = 0;
  std::vector<std::uint16_t> map;  // size source_levels, nondecreasing

  void validate() const;
};

// How many images to draw per class when estimating a domain's average CDF.
struct CorpusCdfSpec {
  int sample_count = 0;
  std::map<Class4, int> quotas;

  void validate() const;  // quotas sum to sample_count, all nonnegative
};

// Equal quotas over the given classes (remainder spread over the first ones).
CorpusCdfSpec equal_class_quotas(int sample_count, const std::vector<Class4>& classes);

Cdf compute_cdf(const Image2D& img);

// Re-expresses a CDF on a different level grid, treating it as a step
// function of normalized intensity.
Cdf resample_cdf(const Cdf& cdf, int levels);

struct ClassedImage {
  Image2D image;
  Class4 cls = Class4::normal;
};

// Pull-based image stream; returns nullopt when exhausted.
using ClassedImageStream = std::function<std::optional<ClassedImage>()>;

// Arithmetic mean of per-image CDFs over a per-class random sample of the
// stream (reservoir sampling, one pass). Throws DataError when the stream
// cannot fill a class quota. All streamed images must share one level count.
Cdf average_cdf(const ClassedImageStream& stream, const CorpusCdfSpec& spec, Rng& rng);

// Monotone remap table sending each source level through the source CDF and
// the linearly-interpolated inverse of the reference CDF.
HmLut build_hm_lut(const Cdf& source_cdf, const Cdf& reference_cdf);

// Per-pixel table lookup; output bit depth is lut.target_levels.
Image2D apply_hm(const Image2D& img, const HmLut& lut);

// Kolmogorov-Smirnov distance; both CDFs must be on the same grid.
double ks_distance(const Cdf& a, const Cdf& b);

// JSON files: {"levels": L, "values": [...]} and
// {"source_levels": K, "target_levels": L, "map": [...]}.
void save_cdf(const Cdf& cdf, const std::filesystem::path& path);
Cdf load_cdf(const std::filesystem::path& path);
void save_hm_lut(const HmLut& lut, const std::filesystem::path& path);
HmLut load_hm_lut(const std::filesystem::path& path);

}  // namespace hmadapt
