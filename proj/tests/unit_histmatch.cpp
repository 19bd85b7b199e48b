#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include "hmadapt/errors.hpp"
#include "hmadapt/histmatch.hpp"
#include "oracles.hpp"

using hmadapt::apply_hm;
using hmadapt::average_cdf;
using hmadapt::build_hm_lut;
using hmadapt::Cdf;
using hmadapt::Class4;
using hmadapt::ClassedImage;
using hmadapt::compute_cdf;
using hmadapt::CorpusCdfSpec;
using hmadapt::DataError;
using hmadapt::HmLut;
using hmadapt::Image2D;
using hmadapt::ks_distance;
using hmadapt::load_cdf;
using hmadapt::load_hm_lut;
using hmadapt::Rng;
using hmadapt::save_cdf;
using hmadapt::save_hm_lut;
using hmadapt::Volume3D;

namespace {

Cdf make_cdf(std::vector<double> values) {
  Cdf c{std::move(values)};
  c.validate();
  return c;
}

// Random valid CDF over `levels` with occasional flat stretches.
Cdf random_cdf(int levels, Rng& rng) {
  std::vector<double> raw(levels);
  double acc = 0.0;
  for (double& v : raw) {
    if (rng.uniform01() < 0.3) v = acc;  // flat region
    else v = (acc += rng.uniform01());
  }
  if (acc == 0.0) acc = raw.back() = 1.0;
  for (double& v : raw) v /= acc;
  raw.back() = 1.0;
  return make_cdf(std::move(raw));
}

hmadapt::ClassedImageStream stream_of(std::vector<ClassedImage> images) {
  auto index = std::make_shared<std::size_t>(0);
  auto data = std::make_shared<std::vector<ClassedImage>>(std::move(images));
  return [index, data]() -> std::optional<ClassedImage> {
    if (*index >= data->size()) return std::nullopt;
    return (*data)[(*index)++];
  };
}

}  // namespace

TEST_CASE("compute_cdf of a constant image is a step") {
  const Image2D img(4, 4, 8, 5);
  const Cdf c = compute_cdf(img);
  REQUIRE(c.levels() == 8);
  for (int v = 0; v < 5; ++v) CHECK(c.values[v] == 0.0);
  for (int v = 5; v < 8; ++v) CHECK(c.values[v] == 1.0);
}

TEST_CASE("compute_cdf splits a two-pixel image evenly") {
  const Image2D img = Image2D::from_pixels(2, 1, 16, {0, 15});
  const Cdf c = compute_cdf(img);
  CHECK(c.values[0] == 0.5);
  CHECK(c.values[14] == 0.5);
  CHECK(c.values[15] == 1.0);
}

TEST_CASE("compute_cdf matches the counting oracle") {
  const Image2D img = Image2D::from_pixels(4, 4, 8, {0, 1, 1, 2, 3, 3, 3, 4,
                                                     5, 5, 6, 6, 7, 7, 7, 0});
  const Cdf c = compute_cdf(img);
  const std::vector<double> want = oracle::counting_cdf(img);
  REQUIRE(c.values.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(c.values[i] == doctest::Approx(want[i]).epsilon(1e-15));

  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Image2D r = oracle::random_image(9, 6, 32, rng);
    const Cdf rc = compute_cdf(r);
    const std::vector<double> rw = oracle::counting_cdf(r);
    for (std::size_t i = 0; i < rw.size(); ++i) CHECK(rc.values[i] == doctest::Approx(rw[i]).epsilon(1e-15));
  }
}

TEST_CASE("average_cdf over identical images is that image's cdf") {
  Rng rng(2);
  const Image2D img = oracle::random_image(6, 6, 16, rng);
  const CorpusCdfSpec spec = hmadapt::equal_class_quotas(3, {Class4::normal});
  Rng sample_rng(3);
  const Cdf avg = average_cdf(stream_of({{img, Class4::normal},
                                         {img, Class4::normal},
                                         {img, Class4::normal}}),
                              spec, sample_rng);
  const Cdf one = compute_cdf(img);
  for (int v = 0; v < avg.levels(); ++v)
    CHECK(avg.values[v] == doctest::Approx(one.values[v]).epsilon(1e-12));
}

TEST_CASE("average_cdf of two constant images is a two-step staircase") {
  const Image2D a(4, 4, 16, 3), b(4, 4, 16, 10);
  const CorpusCdfSpec spec = hmadapt::equal_class_quotas(2, {Class4::normal});
  Rng rng(4);
  const Cdf avg =
      average_cdf(stream_of({{a, Class4::normal}, {b, Class4::normal}}), spec, rng);
  for (int v = 0; v < 3; ++v) CHECK(avg.values[v] == 0.0);
  for (int v = 3; v < 10; ++v) CHECK(avg.values[v] == 0.5);
  for (int v = 10; v < 16; ++v) CHECK(avg.values[v] == 1.0);
}

TEST_CASE("average_cdf is the per-bin mean of member cdfs") {
  Rng rng(5);
  std::vector<ClassedImage> images;
  for (int i = 0; i < 3; ++i)
    images.push_back({oracle::random_image(5, 4, 8, rng), Class4::normal});

  std::vector<double> want(8, 0.0);
  for (const auto& ci : images) {
    const std::vector<double> c = oracle::counting_cdf(ci.image);
    for (int v = 0; v < 8; ++v) want[v] += c[v] / 3.0;
  }

  const CorpusCdfSpec spec = hmadapt::equal_class_quotas(3, {Class4::normal});
  Rng sample_rng(6);
  const Cdf avg = average_cdf(stream_of(images), spec, sample_rng);
  for (int v = 0; v < 8; ++v) CHECK(avg.values[v] == doctest::Approx(want[v]).epsilon(1e-12));
}

TEST_CASE("average_cdf demands every class quota") {
  Rng rng(7);
  const Image2D img = oracle::random_image(4, 4, 8, rng);
  const CorpusCdfSpec spec =
      hmadapt::equal_class_quotas(4, {Class4::normal, Class4::malignant});
  Rng sample_rng(8);
  CHECK_THROWS_AS(average_cdf(stream_of({{img, Class4::normal}, {img, Class4::normal}}),
                              spec, sample_rng),
                  DataError);
}

TEST_CASE("self-match lut on a strictly increasing cdf is the identity") {
  const Cdf c = make_cdf({0.25, 0.5, 0.75, 1.0});
  const HmLut lut = build_hm_lut(c, c);
  for (std::uint32_t p = 0; p < 4; ++p) CHECK(lut.map[p] == p);
}

TEST_CASE("step reference collapses every level to the step") {
  const Cdf src = make_cdf({0.25, 0.5, 0.75, 1.0});
  const Cdf ref = make_cdf({0.0, 0.0, 1.0, 1.0});  // all mass at level 2
  const HmLut lut = build_hm_lut(src, ref);
  for (std::uint32_t p = 0; p < 4; ++p) CHECK(lut.map[p] <= 2);
  CHECK(lut.map[3] == 2);
}

TEST_CASE("lut matches the exhaustive inverse-cdf oracle") {
  // Dyadic values keep every interpolation step exactly representable, so the
  // hand-computed expectations below are rounding-mode independent.
  const Cdf src = make_cdf({0.25, 0.5, 0.75, 1.0});
  const Cdf ref = make_cdf({0.125, 0.375, 0.875, 1.0});
  const HmLut lut = build_hm_lut(src, ref);

  // Oracle: for each source level, scan for the smallest reference level
  // whose cdf reaches the quantile, then linearly interpolate from the
  // previous level and round.
  for (int p = 0; p < 4; ++p) {
    const double q = src.values[p];
    int j = 0;
    while (ref.values[j] < q) ++j;
    double exact;
    if (j == 0) {
      exact = 0.0;
    } else {
      const double lo = ref.values[j - 1], hi = ref.values[j];
      exact = (j - 1) + (q - lo) / (hi - lo);
    }
    CHECK(lut.map[p] == static_cast<std::uint16_t>(std::llround(exact)));
  }
  CHECK(lut.map[0] == 1);  // q=0.25: 0 + (0.25-0.125)/0.25 = 0.5, half away -> 1
  CHECK(lut.map[1] == 1);  // q=0.50: 1 + (0.5-0.375)/0.5 = 1.25 -> 1
  CHECK(lut.map[2] == 2);  // q=0.75: 1 + (0.75-0.375)/0.5 = 1.75 -> 2
  CHECK(lut.map[3] == 3);  // q=1.00: 2 + (1-0.875)/0.125 = 3
}

TEST_CASE("lut is monotone for random cdf pairs") {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const Cdf a = random_cdf(16 + static_cast<int>(rng.uniform_int(49)), rng);
    const Cdf b = random_cdf(16 + static_cast<int>(rng.uniform_int(49)), rng);
    const HmLut lut = build_hm_lut(a, b);
    for (std::size_t i = 1; i < lut.map.size(); ++i) CHECK(lut.map[i] >= lut.map[i - 1]);
  }
}

TEST_CASE("apply_hm with the identity lut is the identity") {
  Rng rng(10);
  const Image2D img = oracle::random_image(6, 6, 16, rng);
  HmLut lut;
  lut.source_levels = lut.target_levels = 16;
  for (int i = 0; i < 16; ++i) lut.map.push_back(static_cast<std::uint16_t>(i));
  CHECK(apply_hm(img, lut) == img);
}

TEST_CASE("apply_hm maps constants through the table") {
  const Image2D img(3, 3, 4, 2);
  const HmLut lut =
      build_hm_lut(make_cdf({0.25, 0.5, 0.75, 1.0}), make_cdf({0.1, 0.4, 0.9, 1.0}));
  const Image2D out = apply_hm(img, lut);
  for (std::uint16_t p : out.pixels()) CHECK(p == lut.map[2]);
}

TEST_CASE("apply_hm is a per-pixel lookup") {
  const Image2D img = Image2D::from_pixels(3, 3, 4, {0, 1, 2, 3, 0, 1, 2, 3, 0});
  const HmLut lut =
      build_hm_lut(make_cdf({0.25, 0.5, 0.75, 1.0}), make_cdf({0.1, 0.4, 0.9, 1.0}));
  const Image2D out = apply_hm(img, lut);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) CHECK(out.at(x, y) == lut.map[img.at(x, y)]);
}

TEST_CASE("apply_hm rejects depth mismatches") {
  const Image2D img(2, 2, 8);
  HmLut lut;
  lut.source_levels = lut.target_levels = 4;
  lut.map = {0, 1, 2, 3};
  CHECK_THROWS_AS(apply_hm(img, lut), std::invalid_argument);
}

TEST_CASE("ks_distance basics") {
  const Cdf a = make_cdf({0.25, 0.5, 0.75, 1.0});
  CHECK(ks_distance(a, a) == 0.0);

  const Cdf step0 = make_cdf({1.0, 1.0, 1.0, 1.0});
  const Cdf stepmax = make_cdf({0.0, 0.0, 0.0, 1.0});
  CHECK(ks_distance(step0, stepmax) == 1.0);

  const Cdf b = make_cdf({0.1, 0.7, 0.8, 1.0});
  CHECK(ks_distance(a, b) == doctest::Approx(0.2).epsilon(1e-12));  // max at level 1
}

TEST_CASE("self-match changes pixels by at most one level") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Image2D img = oracle::random_image(64, 64, 256, rng);
    const Cdf c = compute_cdf(img);
    const HmLut lut = build_hm_lut(c, c);
    const Image2D out = apply_hm(img, lut);
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        CHECK(std::abs(int(out.at(x, y)) - int(img.at(x, y))) <= 1);
  }
}

TEST_CASE("matching commutes with mip exactly") {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    Volume3D v;
    const int depth = 2 + static_cast<int>(rng.uniform_int(4));
    for (int i = 0; i < depth; ++i) v.slices.push_back(oracle::random_image(16, 16, 64, rng));
    const HmLut lut = build_hm_lut(random_cdf(64, rng), random_cdf(32, rng));

    Volume3D matched;
    for (const auto& s : v.slices) matched.slices.push_back(apply_hm(s, lut));
    CHECK(apply_hm(mip(v), lut) == mip(matched));
  }
}

TEST_CASE("cdf and lut json files round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "hmadapt_hm_json";
  std::filesystem::create_directories(dir);
  Rng rng(13);
  const Cdf c = random_cdf(32, rng);
  save_cdf(c, dir / "c.json");
  const Cdf back = load_cdf(dir / "c.json");
  REQUIRE(back.levels() == c.levels());
  for (int i = 0; i < c.levels(); ++i) CHECK(back.values[i] == c.values[i]);

  const HmLut lut = build_hm_lut(c, random_cdf(16, rng));
  save_hm_lut(lut, dir / "l.json");
  const HmLut lback = load_hm_lut(dir / "l.json");
  CHECK(lback.source_levels == lut.source_levels);
  CHECK(lback.target_levels == lut.target_levels);
  CHECK(lback.map == lut.map);
}
