#include "hmadapt/histmatch.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "hmadapt/errors.hpp"

namespace hmadapt {

void Cdf::validate() {
  if (values.empty()) throw std::invalid_argument("Cdf: empty");
  double prev = 0.0;
  for (double v : values) {
    if (!(v >= prev - 1e-15) || !(v <= 1.0 + 1e-12))
      throw std::invalid_argument("Cdf: values must be nondecreasing in [0, 1]");
    prev = v;
  }
  if (std::abs(values.back() - 1.0) > 1e-12)
    throw std::invalid_argument("Cdf: last value must be 1.0");
  values.back() = 1.0;
}

void HmLut::validate() const {
  if (map.size() != source_levels || source_levels == 0 || target_levels == 0)
    throw std::invalid_argument("HmLut: inconsistent sizes");
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (map[i] >= target_levels)
      throw std::invalid_argument("HmLut: entry exceeds target_levels-1");
    if (i > 0 && map[i] < map[i - 1])
      throw std::invalid_argument("HmLut: map must be nondecreasing");
  }
}

void CorpusCdfSpec::validate() const {
  int total = 0;
  for (const auto& [cls, n] : quotas) {
    if (n < 0) throw std::invalid_argument("CorpusCdfSpec: negative quota");
    total += n;
  }
  if (total != sample_count)
    throw std::invalid_argument("CorpusCdfSpec: quotas must sum to sample_count");
}

CorpusCdfSpec equal_class_quotas(int sample_count, const std::vector<Class4>& classes) {
  if (sample_count <= 0 || classes.empty())
    throw std::invalid_argument("equal_class_quotas: need a positive count and classes");
  CorpusCdfSpec spec;
  spec.sample_count = sample_count;
  const int base = sample_count / static_cast<int>(classes.size());
  int remainder = sample_count % static_cast<int>(classes.size());
  for (Class4 c : classes) {
    spec.quotas[c] = base + (remainder > 0 ? 1 : 0);
    if (remainder > 0) --remainder;
  }
  return spec;
}

Cdf compute_cdf(const Image2D& img) {
  if (img.pixel_count() == 0) throw std::invalid_argument("compute_cdf: empty image");
  std::vector<std::int64_t> counts(img.levels(), 0);
  for (std::uint16_t p : img.pixels()) ++counts[p];
  Cdf cdf;
  cdf.values.resize(img.levels());
  const double total = static_cast<double>(img.pixel_count());
  std::int64_t running = 0;
  for (std::size_t v = 0; v < counts.size(); ++v) {
    running += counts[v];
    cdf.values[v] = static_cast<double>(running) / total;
  }
  cdf.values.back() = 1.0;
  return cdf;
}

Cdf resample_cdf(const Cdf& cdf, int levels) {
  if (levels < 1) throw std::invalid_argument("resample_cdf: levels must be >= 1");
  const int src = cdf.levels();
  if (levels == src) return cdf;
  Cdf out;
  out.values.resize(levels);
  for (int g = 0; g < levels; ++g) {
    // Right edge of target bin g in normalized intensity is (g+1)/levels;
    // the source level covering it is ceil((g+1)*src/levels) - 1.
    const std::int64_t num = static_cast<std::int64_t>(g + 1) * src;
    const std::int64_t idx = (num + levels - 1) / levels - 1;
    out.values[g] = cdf.values[static_cast<std::size_t>(std::clamp<std::int64_t>(idx, 0, src - 1))];
  }
  out.values.back() = 1.0;
  return out;
}

Cdf average_cdf(const ClassedImageStream& stream, const CorpusCdfSpec& spec, Rng& rng) {
  spec.validate();
  struct Reservoir {
    std::vector<Cdf> kept;
    std::int64_t seen = 0;
  };
  std::map<Class4, Reservoir> reservoirs;
  int levels = -1;
  for (;;) {
    std::optional<ClassedImage> item = stream();
    if (!item) break;
    auto quota_it = spec.quotas.find(item->cls);
    if (quota_it == spec.quotas.end() || quota_it->second == 0) continue;
    if (levels < 0) levels = static_cast<int>(item->image.levels());
    if (static_cast<int>(item->image.levels()) != levels)
      throw DataError("average_cdf: images disagree in level count");
    Reservoir& res = reservoirs[item->cls];
    const auto quota = static_cast<std::size_t>(quota_it->second);
    Cdf cdf = compute_cdf(item->image);
    if (res.kept.size() < quota) {
      res.kept.push_back(std::move(cdf));
    } else {
      const std::uint64_t j = rng.uniform_int(static_cast<std::uint64_t>(res.seen) + 1);
      if (j < quota) res.kept[j] = std::move(cdf);
    }
    ++res.seen;
  }
  std::size_t total = 0;
  for (const auto& [cls, quota] : spec.quotas) {
    if (quota == 0) continue;
    const auto it = reservoirs.find(cls);
    const std::size_t have = it == reservoirs.end() ? 0 : it->second.kept.size();
    if (have < static_cast<std::size_t>(quota))
      throw DataError(std::string("average_cdf: class ") + to_string(cls) + " supplied " +
                      std::to_string(have) + " of " + std::to_string(quota) + " samples");
    total += static_cast<std::size_t>(quota);
  }
  Cdf mean;
  mean.values.assign(static_cast<std::size_t>(levels), 0.0);
  for (const auto& [cls, res] : reservoirs)
    for (const Cdf& c : res.kept)
      for (std::size_t v = 0; v < mean.values.size(); ++v) mean.values[v] += c.values[v];
  for (double& v : mean.values) v /= static_cast<double>(total);
  mean.values.back() = 1.0;
  mean.validate();
  return mean;
}

HmLut build_hm_lut(const Cdf& source_cdf, const Cdf& reference_cdf) {
  Cdf fs = source_cdf;
  Cdf fr = reference_cdf;
  fs.validate();
  fr.validate();
  const int target = fr.levels();
  HmLut lut;
  lut.source_levels = static_cast<std::uint32_t>(fs.levels());
  lut.target_levels = static_cast<std::uint32_t>(target);
  lut.map.resize(fs.values.size());
  for (std::size_t p = 0; p < fs.values.size(); ++p) {
    const double q = fs.values[p];
    const auto it = std::lower_bound(fr.values.begin(), fr.values.end(), q);
    const auto idx = static_cast<std::int64_t>(it - fr.values.begin());
    double mapped;
    if (idx <= 0) {
      mapped = 0.0;  // quantile at or below the lowest reference level
    } else if (idx >= target) {
      mapped = static_cast<double>(target - 1);  // fp slack above 1.0
    } else {
      // Interpolate between the bracketing levels idx-1 and idx. The lower
      // bound guarantees fr[idx-1] < q <= fr[idx], so the gap is positive,
      // and flat runs below q resolve to the smallest attaining level.
      const double lo = fr.values[idx - 1];
      const double hi = fr.values[idx];
      mapped = static_cast<double>(idx - 1) + (q - lo) / (hi - lo);
    }
    lut.map[p] = clamp_level(mapped, lut.target_levels);
  }
  lut.validate();
  return lut;
}

Image2D apply_hm(const Image2D& img, const HmLut& lut) {
  lut.validate();
  if (img.levels() != lut.source_levels)
    throw std::invalid_argument("apply_hm: image levels do not match lut.source_levels");
  Image2D out(img.width(), img.height(), lut.target_levels);
  const auto& src = img.pixels();
  auto& dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = lut.map[src[i]];
  return out;
}

double ks_distance(const Cdf& a, const Cdf& b) {
  if (a.levels() != b.levels())
    throw std::invalid_argument("ks_distance: CDFs must share one grid (resample first)");
  double best = 0.0;
  for (std::size_t v = 0; v < a.values.size(); ++v)
    best = std::max(best, std::abs(a.values[v] - b.values[v]));
  return best;
}

namespace {

nlohmann::json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open");
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": invalid JSON: " + e.what());
  }
}

void save_json_file(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << j.dump(2) << "\n";
  if (!out) throw IoError(path.string() + ": write failed");
}

}  // namespace

void save_cdf(const Cdf& cdf, const std::filesystem::path& path) {
  nlohmann::json j;
  j["levels"] = cdf.levels();
  j["values"] = cdf.values;
  save_json_file(j, path);
}

Cdf load_cdf(const std::filesystem::path& path) {
  const auto j = load_json_file(path);
  Cdf cdf;
  try {
    cdf.values = j.at("values").get<std::vector<double>>();
    if (j.at("levels").get<int>() != cdf.levels())
      throw IoError(path.string() + ": levels field disagrees with values length");
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  try {
    cdf.validate();
  } catch (const std::invalid_argument& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return cdf;
}

void save_hm_lut(const HmLut& lut, const std::filesystem::path& path) {
  lut.validate();
  nlohmann::json j;
  j["source_levels"] = lut.source_levels;
  j["target_levels"] = lut.target_levels;
  j["map"] = lut.map;
  save_json_file(j, path);
}

HmLut load_hm_lut(const std::filesystem::path& path) {
  const auto j = load_json_file(path);
  HmLut lut;
  try {
    lut.source_levels = j.at("source_levels").get<std::uint32_t>();
    lut.target_levels = j.at("target_levels").get<std::uint32_t>();
    lut.map = j.at("map").get<std::vector<std::uint16_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  try {
    lut.validate();
  } catch (const std::invalid_argument& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return lut;
}

}  // namespace hmadapt
