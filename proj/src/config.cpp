#include "hmadapt/config.hpp"

#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "hmadapt/errors.hpp"

namespace hmadapt {

const char* to_string(FinetuneMode m) {
  switch (m) {
    case FinetuneMode::test_only: return "test_only";
    case FinetuneMode::last_layer: return "last_layer";
    case FinetuneMode::spottune: return "spottune";
  }
  return "?";
}

FinetuneMode finetune_mode_from_string(const std::string& s) {
  if (s == "test_only") return FinetuneMode::test_only;
  if (s == "last_layer") return FinetuneMode::last_layer;
  if (s == "spottune") return FinetuneMode::spottune;
  throw ConfigError("unknown finetune mode '" + s +
                    "' (expected test_only, last_layer, or spottune)");
}

namespace {

using nlohmann::json;

// Wraps a JSON object so every access failure reports its full field path.
class Section {
 public:
  Section(const json* j, std::string path) : j_(j), path_(std::move(path)) {}

  bool present() const { return j_ != nullptr; }

  Section sub(const char* key) const {
    if (!j_ || !j_->contains(key)) return Section(nullptr, join(key));
    const json& child = (*j_)[key];
    if (!child.is_object()) throw ConfigError(join(key) + ": expected an object");
    return Section(&child, join(key));
  }

  template <typename T>
  T get(const char* key, const char* kind, T fallback) const {
    if (!j_ || !j_->contains(key)) return fallback;
    try {
      return (*j_)[key].get<T>();
    } catch (const json::exception&) {
      throw ConfigError(join(key) + ": expected " + kind);
    }
  }

  double num(const char* key, double fallback) const {
    return get<double>(key, "a number", fallback);
  }
  int integer(const char* key, int fallback) const {
    return get<int>(key, "an integer", fallback);
  }
  bool boolean(const char* key, bool fallback) const {
    return get<bool>(key, "a boolean", fallback);
  }
  std::string str(const char* key, const std::string& fallback) const {
    return get<std::string>(key, "a string", fallback);
  }

  std::string require_str(const char* key) const {
    if (!j_ || !j_->contains(key)) throw ConfigError(join(key) + ": required");
    return get<std::string>(key, "a string", std::string());
  }

  std::vector<int> int_list(const char* key, std::vector<int> fallback) const {
    return get<std::vector<int>>(key, "an integer array", std::move(fallback));
  }
  std::vector<std::uint64_t> u64_list(const char* key,
                                      std::vector<std::uint64_t> fallback) const {
    return get<std::vector<std::uint64_t>>(key, "an integer array", std::move(fallback));
  }

  std::string join(const char* key) const {
    return path_.empty() ? std::string(key) : path_ + "." + key;
  }

 private:
  const json* j_;
  std::string path_;
};

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::string& value) {
  if (value.empty()) return {};  // unset stays unset
  const std::filesystem::path p(value);
  return p.is_absolute() ? p : base / p;
}

SynthClassCounts read_counts(const Section& s, const SynthClassCounts& fallback) {
  SynthClassCounts c = fallback;
  c.normal = s.integer("normal", c.normal);
  c.benign = s.integer("benign", c.benign);
  c.high_risk = s.integer("high_risk", c.high_risk);
  c.malignant = s.integer("malignant", c.malignant);
  return c;
}

json counts_to_json(const SynthClassCounts& c) {
  return json{{"normal", c.normal},
              {"benign", c.benign},
              {"high_risk", c.high_risk},
              {"malignant", c.malignant}};
}

void validate_positive(const char* path, double v) {
  if (!(v > 0.0)) throw ConfigError(std::string(path) + ": must be positive");
}

}  // namespace

void ExperimentConfig::validate() const {
  if (output_root.empty()) throw ConfigError("output_root: required");
  if (seeds.empty()) throw ConfigError("seeds: need at least one seed");
  try {
    patch.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("patch: ") + e.what());
  }
  if (!(foreground_threshold > 0.0 && foreground_threshold < 1.0))
    throw ConfigError("foreground_threshold: must be in (0,1)");
  try {
    augment.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("augment: ") + e.what());
  }
  try {
    net.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("net: ") + e.what());
  }
  validate_positive("train.lr", train.lr);
  if (train.weight_decay < 0.0) throw ConfigError("train.weight_decay: must be >= 0");
  if (train.epochs < 0) throw ConfigError("train.epochs: must be >= 0");
  if (train.epoch_size < 1) throw ConfigError("train.epoch_size: must be >= 1");
  if (train.batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
  validate_positive("finetune.lr", finetune.lr);
  if (finetune.weight_decay < 0.0)
    throw ConfigError("finetune.weight_decay: must be >= 0");
  if (finetune.epochs < 0) throw ConfigError("finetune.epochs: must be >= 0");
  if (finetune.epoch_size < 1) throw ConfigError("finetune.epoch_size: must be >= 1");
  if (finetune.batch_size < 1) throw ConfigError("finetune.batch_size: must be >= 1");
  validate_positive("finetune.temperature", finetune.temperature);
  if (hm.sample_count < 1) throw ConfigError("hm.sample_count: must be >= 1");
  if (patch.out_size != net.input_size)
    throw ConfigError("patch.out_size: must equal net.input_size (" +
                      std::to_string(net.input_size) + ")");
  if (synth) {
    try {
      synth->validate();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("synth: ") + e.what());
    }
  }
}

ExperimentConfig config_from_json(const std::string& text,
                                  const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root: expected an object");
  const Section root(&j, "");

  ExperimentConfig cfg;
  cfg.output_root = resolve(base_dir, root.require_str("output_root"));
  if (const char* env = std::getenv("HMADAPT_OUTPUT_ROOT"); env && *env)
    cfg.output_root = env;

  const Section data = root.sub("data");
  if (data.present()) {
    cfg.data.source_manifest = resolve(base_dir, data.str("source_manifest", ""));
    cfg.data.target_manifest = resolve(base_dir, data.str("target_manifest", ""));
    cfg.data.source_image_root = resolve(base_dir, data.str("source_image_root", ""));
    cfg.data.target_image_root = resolve(base_dir, data.str("target_image_root", ""));
  }

  const Section patch = root.sub("patch");
  cfg.patch.crop_size = patch.integer("crop_size", cfg.patch.crop_size);
  cfg.patch.out_size = patch.integer("out_size", cfg.patch.out_size);
  cfg.foreground_threshold =
      patch.num("foreground_threshold", cfg.foreground_threshold);

  const Section aug = root.sub("augment");
  cfg.augment.flip_prob = aug.num("flip_prob", cfg.augment.flip_prob);
  cfg.augment.noise_sigma = aug.num("noise_sigma", cfg.augment.noise_sigma);
  cfg.augment.translate_sigma = aug.num("translate_sigma", cfg.augment.translate_sigma);
  cfg.augment.rotate_range_deg =
      aug.num("rotate_range_deg", cfg.augment.rotate_range_deg);

  const Section net = root.sub("net");
  cfg.net.input_size = net.integer("input_size", cfg.net.input_size);
  cfg.net.block_count = net.integer("block_count", cfg.net.block_count);
  cfg.net.stage_channels = net.int_list("stage_channels", cfg.net.stage_channels);
  cfg.net.classes = net.integer("classes", cfg.net.classes);
  cfg.net.stem_stride = net.integer("stem_stride", cfg.net.stem_stride);
  cfg.net.norm_eps = net.num("norm_eps", cfg.net.norm_eps);
  cfg.net.norm_momentum = net.num("norm_momentum", cfg.net.norm_momentum);

  const Section train = root.sub("train");
  cfg.train.lr = train.num("lr", cfg.train.lr);
  cfg.train.weight_decay = train.num("weight_decay", cfg.train.weight_decay);
  cfg.train.epochs = train.integer("epochs", cfg.train.epochs);
  cfg.train.epoch_size = train.integer("epoch_size", cfg.train.epoch_size);
  cfg.train.batch_size = train.integer("batch_size", cfg.train.batch_size);

  const Section ft = root.sub("finetune");
  cfg.finetune.lr = ft.num("lr", cfg.finetune.lr);
  cfg.finetune.weight_decay = ft.num("weight_decay", cfg.finetune.weight_decay);
  cfg.finetune.epochs = ft.integer("epochs", cfg.finetune.epochs);
  cfg.finetune.epoch_size = ft.integer("epoch_size", cfg.finetune.epoch_size);
  cfg.finetune.batch_size = ft.integer("batch_size", cfg.finetune.batch_size);
  cfg.finetune.temperature = ft.num("temperature", cfg.finetune.temperature);

  const Section hm = root.sub("hm");
  cfg.hm.enabled = hm.boolean("enabled", cfg.hm.enabled);
  cfg.hm.sample_count = hm.integer("sample_count", cfg.hm.sample_count);

  cfg.seeds = root.u64_list("seeds", cfg.seeds);

  const Section synth = root.sub("synth");
  if (synth.present()) {
    SyntheticDomainSpec s;
    s.image_size = synth.integer("image_size", s.image_size);
    s.levels = synth.integer("levels", s.levels);
    s.gamma = synth.num("gamma", s.gamma);
    s.bias = synth.integer("bias", s.bias);
    s.train = read_counts(synth.sub("train"), s.train);
    s.val = read_counts(synth.sub("val"), s.val);
    s.test = read_counts(synth.sub("test"), s.test);
    s.base_lo = synth.num("base_lo", s.base_lo);
    s.base_hi = synth.num("base_hi", s.base_hi);
    s.texture_amp = synth.num("texture_amp", s.texture_amp);
    s.benign_contrast_lo = synth.num("benign_contrast_lo", s.benign_contrast_lo);
    s.benign_contrast_hi = synth.num("benign_contrast_hi", s.benign_contrast_hi);
    s.malign_contrast_lo = synth.num("malign_contrast_lo", s.malign_contrast_lo);
    s.malign_contrast_hi = synth.num("malign_contrast_hi", s.malign_contrast_hi);
    s.blob_sigma_lo = synth.num("blob_sigma_lo", s.blob_sigma_lo);
    s.blob_sigma_hi = synth.num("blob_sigma_hi", s.blob_sigma_hi);
    s.noise_sigma = synth.num("noise_sigma", s.noise_sigma);
    cfg.synth = s;
  }

  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return config_from_json(text, path.parent_path());
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["output_root"] = cfg.output_root.string();
  j["data"] = {{"source_manifest", cfg.data.source_manifest.string()},
               {"target_manifest", cfg.data.target_manifest.string()},
               {"source_image_root", cfg.data.source_image_root.string()},
               {"target_image_root", cfg.data.target_image_root.string()}};
  j["patch"] = {{"crop_size", cfg.patch.crop_size},
                {"out_size", cfg.patch.out_size},
                {"foreground_threshold", cfg.foreground_threshold}};
  j["augment"] = {{"flip_prob", cfg.augment.flip_prob},
                  {"noise_sigma", cfg.augment.noise_sigma},
                  {"translate_sigma", cfg.augment.translate_sigma},
                  {"rotate_range_deg", cfg.augment.rotate_range_deg}};
  j["net"] = {{"input_size", cfg.net.input_size},
              {"block_count", cfg.net.block_count},
              {"stage_channels", cfg.net.stage_channels},
              {"classes", cfg.net.classes},
              {"stem_stride", cfg.net.stem_stride},
              {"norm_eps", cfg.net.norm_eps},
              {"norm_momentum", cfg.net.norm_momentum}};
  j["train"] = {{"lr", cfg.train.lr},
                {"weight_decay", cfg.train.weight_decay},
                {"epochs", cfg.train.epochs},
                {"epoch_size", cfg.train.epoch_size},
                {"batch_size", cfg.train.batch_size}};
  j["finetune"] = {{"lr", cfg.finetune.lr},
                   {"weight_decay", cfg.finetune.weight_decay},
                   {"epochs", cfg.finetune.epochs},
                   {"epoch_size", cfg.finetune.epoch_size},
                   {"batch_size", cfg.finetune.batch_size},
                   {"temperature", cfg.finetune.temperature}};
  j["hm"] = {{"enabled", cfg.hm.enabled}, {"sample_count", cfg.hm.sample_count}};
  j["seeds"] = cfg.seeds;
  if (cfg.synth) {
    const SyntheticDomainSpec& s = *cfg.synth;
    j["synth"] = {{"image_size", s.image_size},
                  {"levels", s.levels},
                  {"gamma", s.gamma},
                  {"bias", s.bias},
                  {"train", counts_to_json(s.train)},
                  {"val", counts_to_json(s.val)},
                  {"test", counts_to_json(s.test)},
                  {"base_lo", s.base_lo},
                  {"base_hi", s.base_hi},
                  {"texture_amp", s.texture_amp},
                  {"benign_contrast_lo", s.benign_contrast_lo},
                  {"benign_contrast_hi", s.benign_contrast_hi},
                  {"malign_contrast_lo", s.malign_contrast_lo},
                  {"malign_contrast_hi", s.malign_contrast_hi},
                  {"blob_sigma_lo", s.blob_sigma_lo},
                  {"blob_sigma_hi", s.blob_sigma_hi},
                  {"noise_sigma", s.noise_sigma}};
  }
  return j.dump(2) + "\n";
}

}  // namespace hmadapt
