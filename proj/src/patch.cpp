#include "hmadapt/patch.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hmadapt/errors.hpp"

namespace hmadapt {

void PatchSpec::validate() const {
  if (out_size < 1 || crop_size < out_size)
    throw std::invalid_argument("PatchSpec: need crop_size >= out_size >= 1");
}

ForegroundMask segment_foreground(const Image2D& img, double threshold_fraction) {
  if (!(threshold_fraction > 0.0 && threshold_fraction < 1.0))
    throw std::invalid_argument("segment_foreground: threshold_fraction must be in (0, 1)");
  ForegroundMask mask;
  mask.width = img.width();
  mask.height = img.height();
  mask.bits.assign(img.pixels().size(), 0);
  const double threshold = threshold_fraction * (img.levels() - 1);
  for (std::size_t i = 0; i < img.pixels().size(); ++i) {
    if (static_cast<double>(img.pixels()[i]) > threshold) {
      mask.bits[i] = 1;
      mask.set_indices.push_back(static_cast<std::int32_t>(i));
    }
  }
  return mask;
}

namespace {

int clamp_axis(int center, int crop, int dim) {
  const int origin = std::clamp(center - crop / 2, 0, dim - crop);
  return origin + crop / 2;
}

}  // namespace

std::pair<int, int> choose_center(const ManifestRecord& record, const Image2D& img,
                                  const ForegroundMask& mask, const PatchSpec& spec,
                                  Rng& rng) {
  spec.validate();
  if (img.width() < spec.crop_size || img.height() < spec.crop_size)
    throw DataError(record.image_path + ": image " + std::to_string(img.width()) + "x" +
                    std::to_string(img.height()) + " is smaller than the crop size " +
                    std::to_string(spec.crop_size));
  int cx, cy;
  if (record.annotation) {
    cx = record.annotation->center_x;
    cy = record.annotation->center_y;
  } else {
    if (mask.empty())
      throw DataError(record.image_path + ": foreground mask is empty, cannot place a patch");
    if (mask.width != img.width() || mask.height != img.height())
      throw std::invalid_argument("choose_center: mask does not match image dimensions");
    const auto pick = mask.set_indices[rng.uniform_int(mask.set_indices.size())];
    cx = static_cast<int>(pick % img.width());
    cy = static_cast<int>(pick / img.width());
  }
  return {clamp_axis(cx, spec.crop_size, img.width()),
          clamp_axis(cy, spec.crop_size, img.height())};
}

Image2D extract_patch(const Image2D& img, std::pair<int, int> center, const PatchSpec& spec) {
  spec.validate();
  const int x0 = center.first - spec.crop_size / 2;
  const int y0 = center.second - spec.crop_size / 2;
  if (x0 < 0 || y0 < 0 || x0 + spec.crop_size > img.width() ||
      y0 + spec.crop_size > img.height())
    throw std::logic_error("extract_patch: crop window out of bounds");
  Image2D crop(spec.crop_size, spec.crop_size, img.levels());
  for (int y = 0; y < spec.crop_size; ++y)
    for (int x = 0; x < spec.crop_size; ++x) crop.at(x, y) = img.at(x0 + x, y0 + y);
  return bilinear_resize(crop, spec.out_size, spec.out_size);
}

std::map<std::string, Split> split_patients(const std::vector<std::string>& patient_ids,
                                            const SplitRatios& ratios, Rng& rng) {
  if (patient_ids.empty()) throw std::invalid_argument("split_patients: no patient ids");
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw std::invalid_argument("split_patients: ratios must be nonnegative and sum to 1");

  std::vector<std::string> ids = patient_ids;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  // Fisher-Yates on the sorted list, so the result depends only on the seed
  // and the id set, not on input order.
  for (std::size_t i = ids.size() - 1; i > 0; --i)
    std::swap(ids[i], ids[rng.uniform_int(i + 1)]);

  const auto n = static_cast<std::int64_t>(ids.size());
  const double raw[3] = {ratios.train * n, ratios.val * n, ratios.test * n};
  std::int64_t counts[3];
  double fractional[3];
  std::int64_t assigned = 0;
  for (int k = 0; k < 3; ++k) {
    counts[k] = static_cast<std::int64_t>(std::floor(raw[k]));
    fractional[k] = raw[k] - static_cast<double>(counts[k]);
    assigned += counts[k];
  }
  // Largest remainder gets the leftovers; ties resolve train, val, test.
  while (assigned < n) {
    int best = 0;
    for (int k = 1; k < 3; ++k)
      if (fractional[k] > fractional[best]) best = k;
    ++counts[best];
    fractional[best] = -1.0;
    ++assigned;
  }

  std::map<std::string, Split> out;
  std::size_t i = 0;
  for (std::int64_t k = 0; k < counts[0]; ++k) out[ids[i++]] = Split::train;
  for (std::int64_t k = 0; k < counts[1]; ++k) out[ids[i++]] = Split::val;
  for (std::int64_t k = 0; k < counts[2]; ++k) out[ids[i++]] = Split::test;
  return out;
}

TwoClassSampler::TwoClassSampler(const std::vector<ManifestRecord>& records)
    : records_(&records) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (binary_label(records[i].class4) == BinaryLabel::positive)
      positives_.push_back(i);
    else
      negatives_.push_back(i);
  }
  if (positives_.empty() || negatives_.empty())
    throw DataError("TwoClassSampler: need at least one record of each binary class");
}

const ManifestRecord& TwoClassSampler::draw(Rng& rng) const {
  const bool positive = rng.uniform_int(2) == 1;
  const auto& pool = positive ? positives_ : negatives_;
  return (*records_)[pool[rng.uniform_int(pool.size())]];
}

}  // namespace hmadapt
