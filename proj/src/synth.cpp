#include "hmadapt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "hmadapt/errors.hpp"
#include "hmadapt/pgm_io.hpp"

namespace hmadapt {

void SyntheticDomainSpec::validate() const {
  if (image_size < 32) throw std::invalid_argument("synth: image_size too small");
  if (levels < 2 || levels > 65536) throw std::invalid_argument("synth: bad levels");
  if (!(gamma > 0.0)) throw std::invalid_argument("synth: gamma must be positive");
  if (train.total() < 1 || val.total() < 1 || test.total() < 1)
    throw std::invalid_argument("synth: every split needs at least one image");
  if (!(base_lo > 0.0 && base_lo <= base_hi && base_hi < 1.0))
    throw std::invalid_argument("synth: base intensity range invalid");
  if (!(benign_contrast_lo <= benign_contrast_hi) ||
      !(malign_contrast_lo <= malign_contrast_hi))
    throw std::invalid_argument("synth: contrast ranges invalid");
  if (!(blob_sigma_lo > 0.0 && blob_sigma_lo <= blob_sigma_hi))
    throw std::invalid_argument("synth: blob sigma range invalid");
  if (texture_amp < 0.0 || noise_sigma < 0.0)
    throw std::invalid_argument("synth: amplitudes must be nonnegative");
}

std::vector<std::uint16_t> synth_warp_lut(const SyntheticDomainSpec& spec) {
  spec.validate();
  const int K = spec.levels;
  std::vector<std::uint16_t> lut(K);
  for (int v = 0; v < K; ++v) {
    const double normalized = static_cast<double>(v) / (K - 1);
    const double warped = std::pow(normalized, spec.gamma) * (K - 1);
    const long long level = std::llround(warped) + spec.bias;
    lut[v] = static_cast<std::uint16_t>(std::clamp<long long>(level, 0, K - 1));
  }
  return lut;
}

SynthImage synth_source_image(const SyntheticDomainSpec& spec, Class4 cls, Rng& content) {
  const int S = spec.image_size;
  const int K = spec.levels;
  const double range = static_cast<double>(K - 1);

  // Tissue: half-ellipse anchored on the left edge.
  const double ax = 0.88 * S;
  const double by = 0.42 * S;
  const double cy = 0.5 * (S - 1);
  auto inside = [&](double x, double y, double scale) {
    const double u = x / (ax * scale);
    const double v = (y - cy) / (by * scale);
    return u * u + v * v <= 1.0;
  };

  const double base = content.uniform(spec.base_lo, spec.base_hi) * range;

  struct Wave {
    double fx, fy, phase;
  };
  Wave waves[4];
  for (Wave& w : waves) {
    w.fx = content.uniform(-3.0, 3.0);
    w.fy = content.uniform(-3.0, 3.0);
    w.phase = content.uniform(0.0, 2.0 * std::numbers::pi);
  }
  const double wave_amp = spec.texture_amp * range / 4.0;

  // Finding blob for the three finding classes.
  bool has_blob = cls != Class4::normal;
  double blob_x = 0.0, blob_y = 0.0, blob_amp = 0.0, blob_sigma = 1.0;
  if (has_blob) {
    do {
      blob_x = content.uniform(0.0, S - 1.0);
      blob_y = content.uniform(0.0, S - 1.0);
    } while (!inside(blob_x, blob_y, 0.78));
    if (cls == Class4::benign)
      blob_amp = content.uniform(spec.benign_contrast_lo, spec.benign_contrast_hi) * range;
    else
      blob_amp = content.uniform(spec.malign_contrast_lo, spec.malign_contrast_hi) * range;
    blob_sigma = content.uniform(spec.blob_sigma_lo, spec.blob_sigma_hi);
    if (cls == Class4::malignant) blob_sigma *= 1.3;
  }

  std::vector<std::uint16_t> pixels(static_cast<std::size_t>(S) * S);
  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      double value = 0.0;
      if (inside(x, y, 1.0)) {
        value = base;
        for (const Wave& w : waves)
          value += wave_amp * std::cos(2.0 * std::numbers::pi *
                                           (w.fx * x / S + w.fy * y / S) +
                                       w.phase);
        if (has_blob) {
          const double dx = x - blob_x;
          const double dy = y - blob_y;
          value += blob_amp *
                   std::exp(-(dx * dx + dy * dy) / (2.0 * blob_sigma * blob_sigma));
        }
      }
      value += spec.noise_sigma * content.normal();
      const long long level = std::llround(value);
      pixels[static_cast<std::size_t>(y) * S + x] =
          static_cast<std::uint16_t>(std::clamp<long long>(level, 0, K - 1));
    }
  }

  SynthImage out;
  out.image = Image2D::from_pixels(S, S, K, std::move(pixels));
  out.cls = cls;
  if (has_blob) {
    const int extent = std::max(8, static_cast<int>(std::lround(6.0 * blob_sigma)));
    out.annotation = AnnotationBox{static_cast<int>(std::lround(blob_x)),
                                   static_cast<int>(std::lround(blob_y)), extent, extent};
  }
  return out;
}

SynthDataset synth_generate(const SyntheticDomainSpec& spec, std::uint64_t seed,
                            const std::filesystem::path& out_root) {
  spec.validate();
  const std::vector<std::uint16_t> warp = synth_warp_lut(spec);
  HmLut warp_lut;
  warp_lut.source_levels = static_cast<std::uint32_t>(spec.levels);
  warp_lut.target_levels = static_cast<std::uint32_t>(spec.levels);
  warp_lut.map = warp;

  const std::filesystem::path source_images = out_root / "source" / "images";
  const std::filesystem::path target_images = out_root / "target" / "images";
  std::filesystem::create_directories(source_images);
  std::filesystem::create_directories(target_images);

  Rng root(seed);
  SynthDataset out;
  int patient = 0;

  const std::pair<Split, const SynthClassCounts*> splits[] = {
      {Split::train, &spec.train}, {Split::val, &spec.val}, {Split::test, &spec.test}};
  const Class4 classes[] = {Class4::normal, Class4::benign, Class4::high_risk,
                            Class4::malignant};

  for (const auto& [split, counts] : splits) {
    for (Class4 cls : classes) {
      int count = 0;
      switch (cls) {
        case Class4::normal: count = counts->normal; break;
        case Class4::benign: count = counts->benign; break;
        case Class4::high_risk: count = counts->high_risk; break;
        case Class4::malignant: count = counts->malignant; break;
      }
      for (int i = 0; i < count; ++i) {
        ++patient;
        Rng content = root.child(static_cast<std::uint64_t>(patient));
        const SynthImage sample = synth_source_image(spec, cls, content);
        const Image2D target_image = apply_hm(sample.image, warp_lut);

        char name[32];
        std::snprintf(name, sizeof(name), "P%04d", patient);
        const std::string file = std::string("images/") + name + ".pgm";
        write_pgm(sample.image, out_root / "source" / file);
        write_pgm(target_image, out_root / "target" / file);

        ManifestRecord rec;
        rec.image_path = file;
        rec.class4 = cls;
        rec.patient_id = name;
        rec.split = split;
        rec.annotation = sample.annotation;
        validate_record(rec);
        out.source_manifest.push_back(rec);
        out.target_manifest.push_back(rec);
      }
    }
  }

  write_manifest(out.source_manifest, out_root / "source" / "manifest.jsonl");
  write_manifest(out.target_manifest, out_root / "target" / "manifest.jsonl");
  return out;
}

}  // namespace hmadapt
