#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "hmadapt/errors.hpp"
#include "hmadapt/patch.hpp"
#include "oracles.hpp"

using hmadapt::AnnotationBox;
using hmadapt::binary_label;
using hmadapt::BinaryLabel;
using hmadapt::choose_center;
using hmadapt::Class4;
using hmadapt::DataError;
using hmadapt::extract_patch;
using hmadapt::ForegroundMask;
using hmadapt::Image2D;
using hmadapt::ManifestRecord;
using hmadapt::PatchSpec;
using hmadapt::Rng;
using hmadapt::segment_foreground;
using hmadapt::Split;
using hmadapt::split_patients;
using hmadapt::TwoClassSampler;

namespace {

ManifestRecord record_with(std::optional<AnnotationBox> box,
                           Class4 cls = Class4::normal) {
  ManifestRecord r;
  r.image_path = "img.pgm";
  r.class4 = cls;
  r.patient_id = "p";
  if (box) r.annotation = box;
  return r;
}

}  // namespace

TEST_CASE("segment_foreground thresholds against the level range") {
  const Image2D dark(4, 4, 4096);
  CHECK(segment_foreground(dark, 0.02).empty());

  const Image2D bright(4, 4, 4096, 4095);
  const ForegroundMask full = segment_foreground(bright, 0.02);
  CHECK(full.set_indices.size() == 16);

  // Left half at 40 (below 0.02*4095=81.9), right half at 200 (above).
  Image2D half(4, 2, 4096);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 4; ++x) half.at(x, y) = x < 2 ? 40 : 200;
  const ForegroundMask m = segment_foreground(half, 0.02);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 4; ++x)
      CHECK(bool(m.bits[y * 4 + x]) == (x >= 2));
}

TEST_CASE("binary_label maps the four classes") {
  CHECK(binary_label(Class4::normal) == BinaryLabel::negative);
  CHECK(binary_label(Class4::benign) == BinaryLabel::negative);
  CHECK(binary_label(Class4::high_risk) == BinaryLabel::positive);
  CHECK(binary_label(Class4::malignant) == BinaryLabel::positive);
}

TEST_CASE("annotated centers pass through when the crop fits") {
  const Image2D img(2048, 2048, 4096, 100);
  const ForegroundMask mask = segment_foreground(img, 0.02);
  Rng rng(1);
  const auto c = choose_center(record_with(AnnotationBox{1024, 1024, 80, 60}), img, mask,
                               PatchSpec{1024, 512}, rng);
  CHECK(c == std::pair{1024, 1024});
}

TEST_CASE("corner annotations are clamped into the valid window") {
  const Image2D img(2048, 2048, 4096, 100);
  const ForegroundMask mask = segment_foreground(img, 0.02);
  Rng rng(2);
  const auto c = choose_center(record_with(AnnotationBox{0, 0, 10, 10}), img, mask,
                               PatchSpec{1024, 512}, rng);
  CHECK(c == std::pair{512, 512});
  const auto far = choose_center(record_with(AnnotationBox{2047, 2040, 10, 10}), img, mask,
                                 PatchSpec{1024, 512}, rng);
  CHECK(far == std::pair{2048 - 512, 2048 - 512});
}

TEST_CASE("a single-pixel mask pins the unannotated center") {
  Image2D img(64, 64, 4096);
  img.at(40, 21) = 4000;
  const ForegroundMask mask = segment_foreground(img, 0.02);
  REQUIRE(mask.set_indices.size() == 1);
  Rng rng(3);
  const auto c = choose_center(record_with(std::nullopt), img, mask, PatchSpec{8, 8}, rng);
  CHECK(c == std::pair{40, 21});
}

TEST_CASE("images smaller than the crop are rejected") {
  const Image2D img(100, 100, 4096, 500);
  const ForegroundMask mask = segment_foreground(img, 0.02);
  Rng rng(4);
  CHECK_THROWS_AS(
      choose_center(record_with(std::nullopt), img, mask, PatchSpec{128, 64}, rng),
      DataError);
}

TEST_CASE("an empty mask without annotation is a data error") {
  const Image2D img(64, 64, 4096);
  const ForegroundMask mask = segment_foreground(img, 0.02);
  Rng rng(5);
  CHECK_THROWS_AS(
      choose_center(record_with(std::nullopt), img, mask, PatchSpec{8, 8}, rng),
      DataError);
}

TEST_CASE("extract_patch keeps constants constant") {
  const Image2D img(64, 64, 4096, 321);
  const Image2D patch = extract_patch(img, {32, 32}, PatchSpec{32, 16});
  CHECK(patch.width() == 16);
  CHECK(patch.height() == 16);
  for (std::uint16_t p : patch.pixels()) CHECK(p == 321);
}

TEST_CASE("crop area fractions match the two reference geometries") {
  const double tall = 1024.0 * 1024.0 / (4096.0 * 3328.0);
  const double wide = 1024.0 * 1024.0 / (3328.0 * 2560.0);
  CHECK(std::round(tall * 1e4) / 1e4 == 0.0769);
  CHECK(std::round(wide * 1e4) / 1e4 == 0.1231);
}

TEST_CASE("extract_patch crops then resizes like the reference") {
  Rng rng(6);
  const Image2D img = oracle::random_image(8, 8, 256, rng);
  const Image2D patch = extract_patch(img, {4, 4}, PatchSpec{4, 2});

  Image2D crop(4, 4, 256);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) crop.at(x, y) = img.at(2 + x, 2 + y);
  CHECK(patch == oracle::bilinear(crop, 2, 2));
}

TEST_CASE("random extractions stay in bounds and in mask") {
  Rng rng(7);
  for (int trial = 0; trial < 2000; ++trial) {
    const int w = 32 + static_cast<int>(rng.uniform_int(64));
    const int h = 32 + static_cast<int>(rng.uniform_int(64));
    Image2D img(w, h, 4096);
    // Random blob of bright pixels.
    const int bright = 1 + static_cast<int>(rng.uniform_int(40));
    for (int i = 0; i < bright; ++i)
      img.at(static_cast<int>(rng.uniform_int(w)), static_cast<int>(rng.uniform_int(h))) =
          4000;
    const ForegroundMask mask = segment_foreground(img, 0.02);
    const PatchSpec spec{16, 8};

    ManifestRecord rec = record_with(std::nullopt);
    if (rng.uniform01() < 0.5)
      rec.annotation = AnnotationBox{static_cast<int>(rng.uniform_int(w)),
                                     static_cast<int>(rng.uniform_int(h)), 5, 5};

    const auto c = choose_center(rec, img, mask, spec, rng);
    CHECK(c.first - spec.crop_size / 2 >= 0);
    CHECK(c.second - spec.crop_size / 2 >= 0);
    CHECK(c.first - spec.crop_size / 2 + spec.crop_size <= w);
    CHECK(c.second - spec.crop_size / 2 + spec.crop_size <= h);
    const Image2D patch = extract_patch(img, c, spec);
    CHECK(patch.width() == spec.out_size);
  }
}

TEST_CASE("ten patients split 8:1:1 exactly") {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back("p" + std::to_string(i));
  Rng rng(8);
  const auto assign = split_patients(ids, {0.8, 0.1, 0.1}, rng);
  std::map<Split, int> counts;
  for (const auto& [id, split] : assign) ++counts[split];
  CHECK(counts[Split::train] == 8);
  CHECK(counts[Split::val] == 1);
  CHECK(counts[Split::test] == 1);
}

TEST_CASE("split assignment is deterministic per seed and order-blind") {
  std::vector<std::string> ids;
  for (int i = 0; i < 57; ++i) ids.push_back("p" + std::to_string(i));
  Rng a(9), b(9), c(9);
  const auto base = split_patients(ids, {0.8, 0.1, 0.1}, a);
  CHECK(base == split_patients(ids, {0.8, 0.1, 0.1}, b));
  std::vector<std::string> reversed(ids.rbegin(), ids.rend());
  CHECK(base == split_patients(reversed, {0.8, 0.1, 0.1}, c));
}

TEST_CASE("large splits hit the requested fractions") {
  std::vector<std::string> ids;
  for (int i = 0; i < 10000; ++i) ids.push_back("p" + std::to_string(i));
  Rng rng(10);
  const auto assign = split_patients(ids, {0.8, 0.1, 0.1}, rng);

  // Partition: every id exactly once.
  CHECK(assign.size() == ids.size());
  std::map<Split, double> frac;
  for (const auto& [id, split] : assign) frac[split] += 1.0 / ids.size();
  CHECK(std::abs(frac[Split::train] - 0.8) < 0.01);
  CHECK(std::abs(frac[Split::val] - 0.1) < 0.01);
  CHECK(std::abs(frac[Split::test] - 0.1) < 0.01);
}

TEST_CASE("two-class sampling is balanced") {
  std::vector<ManifestRecord> records{record_with(std::nullopt, Class4::normal),
                                      record_with(AnnotationBox{0, 0, 1, 1},
                                                  Class4::malignant)};
  const TwoClassSampler sampler(records);
  Rng rng(11);
  int positives = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i)
    positives += binary_label(sampler.draw(rng).class4) == BinaryLabel::positive;
  CHECK(std::abs(positives / double(draws) - 0.5) < 0.02);
}

TEST_CASE("single-class manifests cannot build a sampler") {
  std::vector<ManifestRecord> records{record_with(std::nullopt, Class4::normal),
                                      record_with(std::nullopt, Class4::benign)};
  CHECK_THROWS_AS(TwoClassSampler{records}, DataError);
}

TEST_CASE("sampling is deterministic per seed") {
  std::vector<ManifestRecord> records;
  for (int i = 0; i < 6; ++i) {
    ManifestRecord r = record_with(std::nullopt, i % 2 ? Class4::malignant : Class4::normal);
    if (i % 2) r.annotation = AnnotationBox{1, 1, 2, 2};
    r.image_path = "img" + std::to_string(i) + ".pgm";
    records.push_back(r);
  }
  const TwoClassSampler sampler(records);
  Rng a(12), b(12);
  for (int i = 0; i < 200; ++i)
    CHECK(sampler.draw(a).image_path == sampler.draw(b).image_path);
}
