#include "hmadapt/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

#include "hmadapt/checkpoint.hpp"
#include "hmadapt/errors.hpp"
#include "hmadapt/synth.hpp"

namespace hmadapt {

ImageStore::ImageStore(std::filesystem::path root, std::optional<HmLut> lut)
    : root_(std::move(root)), lut_(std::move(lut)) {}

const Image2D& ImageStore::get(const std::string& rel_path) {
  auto it = cache_.find(rel_path);
  if (it != cache_.end()) return it->second;
  Image2D img = read_pgm(root_ / rel_path);
  if (lut_) img = apply_hm(img, *lut_);
  return cache_.emplace(rel_path, std::move(img)).first->second;
}

PatchPipeline::PatchPipeline(ImageStore& store, PatchSettings settings)
    : store_(&store), settings_(settings) {
  settings_.spec.validate();
}

Image2D PatchPipeline::extract(const ManifestRecord& rec, Rng& rng) {
  const Image2D& img = store_->get(rec.image_path);
  auto it = masks_.find(rec.image_path);
  if (it == masks_.end()) {
    it = masks_.emplace(rec.image_path,
                        segment_foreground(img, settings_.foreground_threshold))
             .first;
  }
  const auto center = choose_center(rec, img, it->second, settings_.spec, rng);
  return extract_patch(img, center, settings_.spec);
}

Tensor patches_to_batch(const std::vector<Image2D>& patches) {
  if (patches.empty()) throw DataError("patch batch: no patches");
  const int S = patches.front().width();
  Tensor batch(static_cast<int>(patches.size()), 1, S, S);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const Image2D& p = patches[i];
    if (p.width() != S || p.height() != S)
      throw std::invalid_argument("patch batch: mixed patch sizes");
    const double scale = 1.0 / (p.levels() - 1);
    const std::size_t base = batch.index(static_cast<int>(i), 0, 0, 0);
    for (std::size_t k = 0; k < p.pixels().size(); ++k)
      batch.v[base + k] = p.pixels()[k] * scale;
  }
  return batch;
}

Tensor make_eval_batch(PatchPipeline& pipe, const std::vector<ManifestRecord>& records,
                       std::uint64_t seed, std::vector<int>* labels) {
  if (records.empty()) throw DataError("eval batch: no records");
  Rng rng(seed);
  std::vector<Image2D> patches;
  patches.reserve(records.size());
  if (labels) labels->clear();
  for (const ManifestRecord& rec : records) {
    patches.push_back(pipe.extract(rec, rng));
    if (labels)
      labels->push_back(binary_label(rec.class4) == BinaryLabel::positive ? 1 : 0);
  }
  return patches_to_batch(patches);
}

ManifestPatchSource::ManifestPatchSource(PatchPipeline& pipe,
                                         const std::vector<ManifestRecord>& records,
                                         const AugmentConfig& aug, std::uint64_t val_seed)
    : pipe_(&pipe), aug_(aug), val_seed_(val_seed) {
  aug_.validate();
  for (const ManifestRecord& rec : records) {
    if (rec.split == Split::train)
      train_.push_back(rec);
    else if (rec.split == Split::val)
      val_.push_back(rec);
  }
  if (train_.empty()) throw DataError("patch source: no train-split records");
  if (val_.empty()) throw DataError("patch source: no val-split records");
  sampler_.emplace(train_);
}

Tensor ManifestPatchSource::draw_train(int count, Rng& rng, std::vector<int>* labels) {
  std::vector<Image2D> patches;
  patches.reserve(count);
  if (labels) labels->clear();
  for (int i = 0; i < count; ++i) {
    const ManifestRecord& rec = sampler_->draw(rng);
    Image2D patch = pipe_->extract(rec, rng);
    patch = augment(patch, aug_, rng);
    patches.push_back(std::move(patch));
    if (labels)
      labels->push_back(binary_label(rec.class4) == BinaryLabel::positive ? 1 : 0);
  }
  return patches_to_batch(patches);
}

Tensor ManifestPatchSource::val_batch(std::vector<int>* labels) {
  if (!val_cache_) {
    val_labels_.clear();
    val_cache_ = make_eval_batch(*pipe_, val_, val_seed_, &val_labels_);
  }
  if (labels) *labels = val_labels_;
  return *val_cache_;
}

std::vector<ManifestRecord> records_in_split(const std::vector<ManifestRecord>& records,
                                             Split split) {
  std::vector<ManifestRecord> out;
  for (const ManifestRecord& rec : records)
    if (rec.split == split) out.push_back(rec);
  return out;
}

Cdf domain_average_cdf(ImageStore& store, const std::vector<ManifestRecord>& records,
                       int sample_count, std::uint64_t seed) {
  if (records.empty()) throw DataError("average cdf: no records");
  std::set<Class4> present;
  for (const ManifestRecord& rec : records) present.insert(rec.class4);
  const CorpusCdfSpec spec = equal_class_quotas(
      sample_count, std::vector<Class4>(present.begin(), present.end()));
  std::size_t next = 0;
  const ClassedImageStream stream = [&]() -> std::optional<ClassedImage> {
    if (next >= records.size()) return std::nullopt;
    const ManifestRecord& rec = records[next++];
    return ClassedImage{store.get(rec.image_path), rec.class4};
  };
  Rng rng(seed);
  return average_cdf(stream, spec, rng);
}

// ---------------- command layer ----------------

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("failed writing: " + path.string());
}

std::string hm_tag(bool hm) { return hm ? "hm" : "raw"; }

struct DomainData {
  std::filesystem::path manifest_path;
  std::filesystem::path image_root;
};

DomainData domain_data(const ExperimentConfig& cfg, const std::string& domain) {
  if (domain == "source")
    return {cfg.data.source_manifest, cfg.data.source_image_root};
  if (domain == "target")
    return {cfg.data.target_manifest, cfg.data.target_image_root};
  throw ConfigError("domain must be 'source' or 'target', got '" + domain + "'");
}

PatchSettings patch_settings(const ExperimentConfig& cfg) {
  return {cfg.patch, cfg.foreground_threshold};
}

// Deterministic sub-seeds so initialization, training order, and corpus
// sampling draw from decorrelated streams.
std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t key) {
  return Rng(seed).child(key).seed();
}
constexpr std::uint64_t kInitKey = 1;
constexpr std::uint64_t kTrainKey = 2;
constexpr std::uint64_t kPolicyKey = 3;
constexpr std::uint64_t kCdfKey = 4;

std::string history_json(const TrainHistory& h, int best_epoch, double best_val_auc,
                         std::optional<double> test_auc = std::nullopt) {
  nlohmann::json j;
  j["best_epoch"] = best_epoch;
  j["best_val_auc"] = best_val_auc;
  j["train_loss"] = h.train_loss;
  j["val_auc"] = h.val_auc;
  if (test_auc) j["test_auc"] = *test_auc;
  return j.dump(2) + "\n";
}

}  // namespace

void write_run_meta(const ExperimentConfig& cfg, const std::string& command) {
  nlohmann::json j;
  j["command"] = command;
  j["config"] = nlohmann::json::parse(config_to_json(cfg));
  write_text(cfg.output_root / "meta" / (command + ".json"), j.dump(2) + "\n");
}

void cmd_split(const SplitArgs& args) {
  std::vector<ManifestRecord> records = read_manifest(args.manifest_in);
  if (records.empty()) throw DataError("split: empty manifest " + args.manifest_in.string());
  std::vector<std::string> patients;
  patients.reserve(records.size());
  for (const ManifestRecord& rec : records) patients.push_back(rec.patient_id);
  Rng rng(args.seed);
  const std::map<std::string, Split> assignment =
      split_patients(patients, args.ratios, rng);
  for (ManifestRecord& rec : records) rec.split = assignment.at(rec.patient_id);
  write_manifest(records, args.manifest_out);
}

void cmd_cdf(const CdfArgs& args) {
  std::vector<ManifestRecord> records = read_manifest(args.manifest);
  if (args.split) records = records_in_split(records, *args.split);
  if (records.empty()) throw DataError("cdf: no records selected from " +
                                       args.manifest.string());
  ImageStore store(args.image_root);
  const Cdf cdf = domain_average_cdf(store, records, args.sample_count, args.seed);
  std::filesystem::create_directories(args.out_path.parent_path());
  save_cdf(cdf, args.out_path);
}

void cmd_match(const MatchArgs& args) {
  const std::vector<ManifestRecord> records = read_manifest(args.manifest);
  if (records.empty()) throw DataError("match: empty manifest " + args.manifest.string());
  const Cdf source = load_cdf(args.source_cdf);
  const Cdf reference = load_cdf(args.reference_cdf);
  const HmLut lut = build_hm_lut(source, reference);
  for (const ManifestRecord& rec : records) {
    const Image2D img = read_pgm(args.image_root / rec.image_path);
    const Image2D matched = apply_hm(img, lut);
    const std::filesystem::path out = args.out_dir / rec.image_path;
    std::filesystem::create_directories(out.parent_path());
    write_pgm(matched, out);
  }
  write_manifest(records, args.out_dir / "manifest.jsonl");
  save_hm_lut(lut, args.out_dir / "lut.json");
}

void cmd_mip(const MipArgs& args) {
  const Volume3D volume = read_volume_dir(args.volume_dir);
  const Image2D projected = mip(volume);
  std::filesystem::create_directories(args.out_path.parent_path());
  write_pgm(projected, args.out_path);
}

void cmd_patchify(const PatchifyArgs& args) {
  const std::vector<ManifestRecord> records = read_manifest(args.manifest);
  if (records.empty())
    throw DataError("patchify: empty manifest " + args.manifest.string());
  ImageStore store(args.image_root);
  PatchPipeline pipe(store, args.settings);
  Rng rng(args.seed);
  nlohmann::json index = nlohmann::json::array();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const ManifestRecord& rec = records[i];
    const Image2D patch = pipe.extract(rec, rng);
    char name[32];
    std::snprintf(name, sizeof(name), "patch_%05zu.pgm", i);
    const std::filesystem::path out = args.out_dir / name;
    std::filesystem::create_directories(args.out_dir);
    write_pgm(patch, out);
    index.push_back({{"patch", name},
                     {"image_path", rec.image_path},
                     {"patient_id", rec.patient_id},
                     {"class", to_string(rec.class4)},
                     {"label", binary_label(rec.class4) == BinaryLabel::positive ? 1 : 0}});
  }
  write_text(args.out_dir / "patches.json", index.dump(2) + "\n");
}

void cmd_synth(const ExperimentConfig& cfg) {
  if (!cfg.synth) throw ConfigError("synth: config has no synth section");
  const std::uint64_t seed = sub_seed(cfg.seeds.front(), kCdfKey + 13);
  synth_generate(*cfg.synth, seed, cfg.output_root / "data");
  write_run_meta(cfg, "synth");
}

std::filesystem::path base_checkpoint_path(const ExperimentConfig& cfg,
                                           std::uint64_t seed) {
  return cfg.output_root / "checkpoints" / ("base_s" + std::to_string(seed) + ".ckpt");
}

std::filesystem::path adapted_checkpoint_path(const ExperimentConfig& cfg,
                                              FinetuneMode mode, bool hm,
                                              std::uint64_t seed) {
  return cfg.output_root / "checkpoints" /
         (std::string(to_string(mode)) + "_" + hm_tag(hm) + "_s" + std::to_string(seed) +
          ".ckpt");
}

void cmd_train(const ExperimentConfig& cfg) {
  const DomainData src = domain_data(cfg, "source");
  const std::vector<ManifestRecord> records = read_manifest(src.manifest_path);
  if (records.empty()) throw DataError("train: empty manifest " +
                                       src.manifest_path.string());
  std::filesystem::create_directories(cfg.output_root / "checkpoints");

  for (const std::uint64_t seed : cfg.seeds) {
    ImageStore store(src.image_root);
    PatchPipeline pipe(store, patch_settings(cfg));
    ManifestPatchSource data(pipe, records, cfg.augment, sub_seed(seed, kCdfKey));

    Rng init_rng(sub_seed(seed, kInitKey));
    const NetParams init = init_net(cfg.net, init_rng);

    TrainOptions opt;
    opt.adam.lr = cfg.train.lr;
    opt.adam.weight_decay = cfg.train.weight_decay;
    opt.epochs = cfg.train.epochs;
    opt.epoch_size = cfg.train.epoch_size;
    opt.batch_size = cfg.train.batch_size;
    opt.seed = sub_seed(seed, kTrainKey);

    const TrainResult result = train(init, data, opt);
    save_net(base_checkpoint_path(cfg, seed), result.params);

    // Source-test AUC of the selected checkpoint, computed exactly the way
    // `eval --mode test_only --domain source` computes it.
    std::optional<double> test_auc;
    const std::vector<ManifestRecord> test = records_in_split(records, Split::test);
    if (!test.empty()) {
      std::vector<int> labels;
      const Tensor batch =
          make_eval_batch(pipe, test, sub_seed(seed, kCdfKey + 1), &labels);
      test_auc = roc_auc(score_set(result.params, batch, labels));
    }
    write_text(cfg.output_root / "reports" /
                   ("train_history_s" + std::to_string(seed) + ".json"),
               history_json(result.history, result.best_epoch, result.best_val_auc,
                            test_auc));
  }
  write_run_meta(cfg, "train");
}

HmLut target_to_source_lut(const ExperimentConfig& cfg) {
  const DomainData src = domain_data(cfg, "source");
  const DomainData tgt = domain_data(cfg, "target");
  const std::uint64_t seed = sub_seed(cfg.seeds.front(), kCdfKey);

  ImageStore source_store(src.image_root);
  const Cdf source_cdf = domain_average_cdf(
      source_store, records_in_split(read_manifest(src.manifest_path), Split::train),
      cfg.hm.sample_count, seed);

  ImageStore target_store(tgt.image_root);
  const Cdf target_cdf = domain_average_cdf(
      target_store, records_in_split(read_manifest(tgt.manifest_path), Split::train),
      cfg.hm.sample_count, seed);

  const HmLut lut = build_hm_lut(target_cdf, source_cdf);
  std::filesystem::create_directories(cfg.output_root / "hm");
  save_cdf(source_cdf, cfg.output_root / "hm" / "source_cdf.json");
  save_cdf(target_cdf, cfg.output_root / "hm" / "target_cdf.json");
  save_hm_lut(lut, cfg.output_root / "hm" / "target_to_source_lut.json");
  return lut;
}

void cmd_finetune(const ExperimentConfig& cfg, FinetuneMode mode, bool hm) {
  if (mode == FinetuneMode::test_only) {
    // No adaptation: evaluation will read the base checkpoints directly.
    write_run_meta(cfg, std::string("finetune_") + to_string(mode) + "_" + hm_tag(hm));
    return;
  }
  const DomainData tgt = domain_data(cfg, "target");
  const std::vector<ManifestRecord> records = read_manifest(tgt.manifest_path);
  if (records.empty())
    throw DataError("finetune: empty manifest " + tgt.manifest_path.string());

  std::optional<HmLut> lut;
  if (hm) lut = target_to_source_lut(cfg);
  std::filesystem::create_directories(cfg.output_root / "checkpoints");

  TrainOptions opt;
  opt.adam.lr = cfg.finetune.lr;
  opt.adam.weight_decay = cfg.finetune.weight_decay;
  opt.epochs = cfg.finetune.epochs;
  opt.epoch_size = cfg.finetune.epoch_size;
  opt.batch_size = cfg.finetune.batch_size;

  for (const std::uint64_t seed : cfg.seeds) {
    ImageStore store(tgt.image_root, lut);
    PatchPipeline pipe(store, patch_settings(cfg));
    ManifestPatchSource data(pipe, records, cfg.augment, sub_seed(seed, kCdfKey));
    const NetParams base = load_net(base_checkpoint_path(cfg, seed));
    opt.seed = sub_seed(seed, kTrainKey + 16);

    if (mode == FinetuneMode::last_layer) {
      const TrainResult result = finetune_last_layer(base, data, opt);
      save_net(adapted_checkpoint_path(cfg, mode, hm, seed), result.params);
      write_text(cfg.output_root / "reports" /
                     ("finetune_last_layer_" + hm_tag(hm) + "_s" + std::to_string(seed) +
                      ".json"),
                 history_json(result.history, result.best_epoch, result.best_val_auc));
    } else {
      Rng policy_rng(sub_seed(seed, kPolicyKey));
      const SpotTuneNet net = make_spottune(base, cfg.finetune.temperature, policy_rng);
      const SpotTuneTrainResult result = spottune_train(net, data, opt);
      save_spottune(adapted_checkpoint_path(cfg, mode, hm, seed), result.net);
      write_text(cfg.output_root / "reports" /
                     ("finetune_spottune_" + hm_tag(hm) + "_s" + std::to_string(seed) +
                      ".json"),
                 history_json(result.history, result.best_epoch, result.best_val_auc));

      // Per-block fine-tune frequencies over the target test split (Fig. 3
      // style plumbing).
      std::vector<int> labels;
      const Tensor test =
          make_eval_batch(pipe, records_in_split(records, Split::test),
                          sub_seed(seed, kCdfKey + 1), &labels);
      const PolicyStats stats = policy_stats(result.net, test);
      write_text(cfg.output_root / "reports" /
                     ("policy_" + hm_tag(hm) + "_s" + std::to_string(seed) + ".csv"),
                 policy_stats_to_csv(stats));
    }
  }
  write_run_meta(cfg, std::string("finetune_") + to_string(mode) + "_" + hm_tag(hm));
}

EvalReport cmd_eval(const ExperimentConfig& cfg, FinetuneMode mode,
                    const std::string& domain, bool hm) {
  const DomainData dd = domain_data(cfg, domain);
  if (domain == "source") hm = false;  // the source domain is the HM reference
  const std::vector<ManifestRecord> records = read_manifest(dd.manifest_path);
  const std::vector<ManifestRecord> test = records_in_split(records, Split::test);
  if (test.empty()) throw DataError("eval: no test-split records in " +
                                    dd.manifest_path.string());

  std::optional<HmLut> lut;
  if (hm) lut = target_to_source_lut(cfg);

  const EvalReport report = seeded_eval(cfg.seeds, [&](std::uint64_t seed) {
    ImageStore store(dd.image_root, lut);
    PatchPipeline pipe(store, patch_settings(cfg));
    std::vector<int> labels;
    const Tensor batch = make_eval_batch(pipe, test, sub_seed(seed, kCdfKey + 1), &labels);
    ScoredSet s;
    if (mode == FinetuneMode::spottune) {
      const SpotTuneNet net =
          load_spottune(adapted_checkpoint_path(cfg, mode, hm, seed));
      s.scores = spottune_score_batch(net, batch);
    } else {
      const NetParams params =
          mode == FinetuneMode::test_only
              ? load_net(base_checkpoint_path(cfg, seed))
              : load_net(adapted_checkpoint_path(cfg, mode, hm, seed));
      s.scores = score_batch(params, batch);
    }
    s.labels = labels;
    return s;
  });

  EvalReport out = report;
  out.mode = to_string(mode);
  out.domain = domain;
  out.hist_match = hm;

  const std::string stem =
      "eval_" + std::string(to_string(mode)) + "_" + domain + "_" + hm_tag(hm);
  write_text(cfg.output_root / "reports" / (stem + ".json"), eval_report_to_json(out));
  write_text(cfg.output_root / "reports" / (stem + "_roc.csv"),
             roc_curve_to_csv(out.curve));
  return out;
}

void cmd_report(const ExperimentConfig& cfg) {
  cmd_train(cfg);

  nlohmann::json rows = nlohmann::json::array();
  std::string csv = "mode,domain,hist_match,mean_auc,std_auc\n";
  auto add = [&](const EvalReport& r) {
    rows.push_back({{"mode", r.mode},
                    {"domain", r.domain},
                    {"hist_match", r.hist_match},
                    {"per_seed_auc", r.per_seed_auc},
                    {"mean_auc", r.mean_auc},
                    {"std_auc", r.std_auc}});
    char line[160];
    std::snprintf(line, sizeof(line), "%s,%s,%d,%.6f,%.6f\n", r.mode.c_str(),
                  r.domain.c_str(), r.hist_match ? 1 : 0, r.mean_auc, r.std_auc);
    csv += line;
  };

  add(cmd_eval(cfg, FinetuneMode::test_only, "source", false));
  for (const bool hm : {false, true}) {
    for (const FinetuneMode mode :
         {FinetuneMode::test_only, FinetuneMode::last_layer, FinetuneMode::spottune}) {
      cmd_finetune(cfg, mode, hm);
      add(cmd_eval(cfg, mode, "target", hm));
    }
  }

  nlohmann::json j;
  j["rows"] = rows;
  write_text(cfg.output_root / "reports" / "report.json", j.dump(2) + "\n");
  write_text(cfg.output_root / "reports" / "report.csv", csv);
  write_run_meta(cfg, "report");
}

}  // namespace hmadapt
