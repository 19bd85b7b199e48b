#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "hmadapt/config.hpp"
#include "hmadapt/errors.hpp"
#include "hmadapt/histmatch.hpp"
#include "hmadapt/manifest.hpp"
#include "hmadapt/pgm_io.hpp"
#include "hmadapt/pipeline.hpp"
#include "oracles.hpp"

using namespace hmadapt;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static int counter = 0;
  const auto dir =
      fs::temp_directory_path() / ("hmadapt_cli_test_" + std::to_string(counter++));
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void spit(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << text;
}

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(HMADAPT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -2;
}

// Six-image two-class dataset with deterministic pixel content.
struct TinyDataset {
  fs::path root;
  fs::path manifest;

  explicit TinyDataset(bool with_splits = true) {
    root = temp_dir();
    fs::create_directories(root / "images");
    std::vector<ManifestRecord> records;
    Rng rng(41);
    for (int i = 0; i < 6; ++i) {
      ManifestRecord rec;
      rec.image_path = "images/I" + std::to_string(i) + ".pgm";
      rec.patient_id = "p" + std::to_string(i);
      rec.split = with_splits ? (i < 4 ? Split::train : (i == 4 ? Split::val : Split::test))
                              : Split::train;
      if (i % 2 == 0) {
        rec.class4 = Class4::normal;
      } else {
        rec.class4 = Class4::malignant;
        rec.annotation = AnnotationBox{24, 24, 8, 8};
      }
      Image2D img = oracle::random_image(48, 48, 256, rng);
      for (int y = 20; y < 28; ++y)
        for (int x = 20; x < 28; ++x) img.at(x, y) = 250;  // guaranteed foreground
      write_pgm(img, root / rec.image_path);
      records.push_back(rec);
    }
    manifest = root / "manifest.jsonl";
    write_manifest(records, manifest);
  }
};

}  // namespace

// ---------------- config grammar ----------------

TEST_CASE("a sparse config inherits documented defaults") {
  const ExperimentConfig cfg = config_from_json(
      R"({"output_root": "out", "patch": {"crop_size": 128, "out_size": 64}})", "/base");
  CHECK(cfg.output_root == fs::path("/base/out"));
  CHECK(cfg.net.input_size == 64);
  CHECK(cfg.train.lr == 5e-5);
  CHECK(cfg.finetune.weight_decay == 1e-4);
  CHECK(cfg.hm.enabled);
  CHECK(cfg.hm.sample_count == 48);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(!cfg.synth.has_value());
  CHECK(cfg.augment.flip_prob == 0.5);
}

TEST_CASE("config errors carry the offending field path") {
  auto expect_error = [](const std::string& text, const std::string& needle) {
    try {
      config_from_json(text, "/base");
      FAIL("expected a config error for: " << text);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  expect_error(R"({})", "output_root");
  expect_error(R"({"output_root": "o", "patch": {"out_size": 64, "crop_size": 128},
                   "train": {"lr": "fast"}})",
               "train.lr");
  expect_error(R"({"output_root": "o", "patch": {"out_size": 64, "crop_size": 128},
                   "hm": {"enabled": "yes"}})",
               "hm.enabled");
  expect_error(R"({"output_root": "o", "patch": {"out_size": 64, "crop_size": 32}})",
               "patch");
  expect_error(R"({"output_root": "o", "patch": {"out_size": 512, "crop_size": 1024}})",
               "patch.out_size");
  expect_error(R"({"output_root": "o", "patch": {"out_size": 64, "crop_size": 128},
                   "seeds": []})",
               "seeds");
  expect_error(R"({"output_root": "o", "patch": {"out_size": 64, "crop_size": 128},
                   "net": {"norm_momentum": 2.0}})",
               "net");
  expect_error(R"(not json)", "JSON");
  expect_error(R"([1, 2])", "object");
}

TEST_CASE("relative data paths resolve against the config directory") {
  const ExperimentConfig cfg = config_from_json(
      R"({"output_root": "/abs/out", "patch": {"crop_size": 128, "out_size": 64},
          "data": {"source_manifest": "src.jsonl", "target_manifest": "/t.jsonl",
                   "source_image_root": "imgs", "target_image_root": "timgs"}})",
      "/cfgdir");
  CHECK(cfg.output_root == fs::path("/abs/out"));
  CHECK(cfg.data.source_manifest == fs::path("/cfgdir/src.jsonl"));
  CHECK(cfg.data.target_manifest == fs::path("/t.jsonl"));
  CHECK(cfg.data.source_image_root == fs::path("/cfgdir/imgs"));
}

TEST_CASE("the output-root environment override wins") {
  setenv("HMADAPT_OUTPUT_ROOT", "/env/out", 1);
  const ExperimentConfig cfg = config_from_json(
      R"({"output_root": "ignored", "patch": {"crop_size": 128, "out_size": 64}})", "/base");
  unsetenv("HMADAPT_OUTPUT_ROOT");
  CHECK(cfg.output_root == fs::path("/env/out"));
}

TEST_CASE("configs survive a serialization round trip") {
  ExperimentConfig cfg = config_from_json(
      R"({"output_root": "/o", "patch": {"crop_size": 96, "out_size": 32,
          "foreground_threshold": 0.05},
          "net": {"input_size": 32, "block_count": 3, "stage_channels": [4, 8]},
          "train": {"lr": 0.001, "epochs": 7},
          "finetune": {"temperature": 0.25},
          "hm": {"enabled": false, "sample_count": 9},
          "seeds": [5, 6],
          "synth": {"image_size": 64, "levels": 512}})",
      "/");
  const std::string once = config_to_json(cfg);
  const ExperimentConfig back = config_from_json(once, "/");
  CHECK(config_to_json(back) == once);
  CHECK(back.patch.crop_size == 96);
  CHECK(back.foreground_threshold == 0.05);
  CHECK(back.net.stage_channels == std::vector<int>{4, 8});
  CHECK(back.train.epochs == 7);
  CHECK(back.finetune.temperature == 0.25);
  CHECK(!back.hm.enabled);
  CHECK(back.seeds == std::vector<std::uint64_t>{5, 6});
  REQUIRE(back.synth.has_value());
  CHECK(back.synth->image_size == 64);
  CHECK(back.synth->levels == 512);
}

TEST_CASE("finetune modes parse by name") {
  CHECK(finetune_mode_from_string("test_only") == FinetuneMode::test_only);
  CHECK(finetune_mode_from_string("last_layer") == FinetuneMode::last_layer);
  CHECK(finetune_mode_from_string("spottune") == FinetuneMode::spottune);
  CHECK_THROWS_AS(finetune_mode_from_string("all_layers"), ConfigError);
}

// ---------------- manifest rules ----------------

TEST_CASE("manifests round-trip through JSONL") {
  const TinyDataset data;
  const auto records = read_manifest(data.manifest);
  REQUIRE(records.size() == 6);
  CHECK(records[1].class4 == Class4::malignant);
  REQUIRE(records[1].annotation.has_value());
  CHECK(records[1].annotation->center_x == 24);
  CHECK(records[0].split == Split::train);
  CHECK(records[5].split == Split::test);

  const auto copy = temp_dir() / "copy.jsonl";
  write_manifest(records, copy);
  CHECK(slurp(copy) == slurp(data.manifest));
}

TEST_CASE("annotation-count rules are enforced per class") {
  ManifestRecord rec;
  rec.image_path = "x.pgm";
  rec.patient_id = "p";

  rec.class4 = Class4::malignant;
  CHECK_THROWS_AS(validate_record(rec), DataError);
  rec.annotation = AnnotationBox{1, 1, 2, 2};
  CHECK_NOTHROW(validate_record(rec));

  rec.class4 = Class4::normal;
  CHECK_THROWS_AS(validate_record(rec), DataError);
  rec.annotation.reset();
  CHECK_NOTHROW(validate_record(rec));

  rec.class4 = Class4::benign;
  CHECK_NOTHROW(validate_record(rec));
  rec.annotation = AnnotationBox{1, 1, 2, 2};
  CHECK_NOTHROW(validate_record(rec));

  rec.class4 = Class4::high_risk;
  rec.annotation.reset();
  CHECK_THROWS_AS(validate_record(rec), DataError);

  rec.class4 = Class4::normal;
  rec.image_path.clear();
  CHECK_THROWS_AS(validate_record(rec), DataError);
}

TEST_CASE("class and split names parse both ways") {
  for (Class4 c : {Class4::normal, Class4::benign, Class4::high_risk, Class4::malignant})
    CHECK(class4_from_string(to_string(c)) == c);
  for (Split s : {Split::train, Split::val, Split::test})
    CHECK(split_from_string(to_string(s)) == s);
  CHECK_THROWS_AS(class4_from_string("spicy"), DataError);
  CHECK_THROWS_AS(split_from_string("holdout"), DataError);
}

// ---------------- CLI binary ----------------

TEST_CASE("help succeeds and bad flags fail with the usage code") {
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("synth --help") == 0);
  CHECK(run_cli("--no-such-flag") == 2);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("eval --config x.json --mode warp_core") == 2);
}

TEST_CASE("missing and malformed inputs map to distinct exit codes") {
  const auto dir = temp_dir();
  // Config file that does not exist: an I/O failure.
  CHECK(run_cli("train --config " + (dir / "nope.json").string()) == 4);
  // Config that is not valid JSON: a configuration error.
  spit(dir / "bad.json", "{oops");
  CHECK(run_cli("train --config " + (dir / "bad.json").string()) == 2);
  // Empty manifest: a data error.
  spit(dir / "empty.jsonl", "");
  CHECK(run_cli("split --manifest " + (dir / "empty.jsonl").string() + " --out " +
                (dir / "split.jsonl").string()) == 3);
  // Manifest pointing at an image that is not on disk: an I/O failure.
  std::vector<ManifestRecord> records(1);
  records[0].image_path = "missing.pgm";
  records[0].patient_id = "p0";
  write_manifest(records, dir / "ghost.jsonl");
  CHECK(run_cli("cdf --manifest " + (dir / "ghost.jsonl").string() + " --images " +
                dir.string() + " --out " + (dir / "cdf.json").string() +
                " --split all --samples 1") == 4);
}

TEST_CASE("split assigns every patient and reruns byte-identically") {
  const TinyDataset data(/*with_splits=*/false);
  const auto out1 = data.root / "split1.jsonl";
  const auto out2 = data.root / "split2.jsonl";
  const std::string base = "split --manifest " + data.manifest.string() +
                           " --train 0.5 --val 0.25 --test 0.25 --seed 3";
  REQUIRE(run_cli(base + " --out " + out1.string()) == 0);
  REQUIRE(run_cli(base + " --out " + out2.string()) == 0);
  CHECK(slurp(out1) == slurp(out2));

  const auto records = read_manifest(out1);
  REQUIRE(records.size() == 6);
  int train = 0, val = 0, test = 0;
  for (const auto& r : records) {
    train += r.split == Split::train;
    val += r.split == Split::val;
    test += r.split == Split::test;
  }
  // 6 * {.5, .25, .25} floors to 3/1/1 and largest remainder places the rest.
  CHECK(train == 3);
  CHECK(val + test == 3);
  CHECK(std::abs(val - test) == 1);
}

TEST_CASE("cdf builds a valid average distribution") {
  const TinyDataset data;
  const auto out = data.root / "cdf.json";
  REQUIRE(run_cli("cdf --manifest " + data.manifest.string() + " --images " +
                  data.root.string() + " --out " + out.string() +
                  " --samples 4 --seed 2") == 0);
  const Cdf cdf = load_cdf(out);
  CHECK(cdf.levels() == 256);
  CHECK(cdf.values.back() == 1.0);
  for (std::size_t i = 1; i < cdf.values.size(); ++i)
    CHECK(cdf.values[i] >= cdf.values[i - 1]);

  const auto again = data.root / "cdf2.json";
  REQUIRE(run_cli("cdf --manifest " + data.manifest.string() + " --images " +
                  data.root.string() + " --out " + again.string() +
                  " --samples 4 --seed 2") == 0);
  CHECK(slurp(out) == slurp(again));
}

TEST_CASE("match rewrites every image through the remap table") {
  const TinyDataset data;
  const auto cdf_a = data.root / "a.json";
  const auto cdf_b = data.root / "b.json";
  REQUIRE(run_cli("cdf --manifest " + data.manifest.string() + " --images " +
                  data.root.string() + " --out " + cdf_a.string() + " --samples 4") == 0);
  // A second, different reference: whole-manifest statistics.
  REQUIRE(run_cli("cdf --manifest " + data.manifest.string() + " --images " +
                  data.root.string() + " --out " + cdf_b.string() +
                  " --samples 6 --split all --seed 9") == 0);

  const auto out_dir = data.root / "matched";
  REQUIRE(run_cli("match --manifest " + data.manifest.string() + " --images " +
                  data.root.string() + " --source-cdf " + cdf_a.string() +
                  " --reference-cdf " + cdf_b.string() + " --out " + out_dir.string()) == 0);

  const HmLut lut = load_hm_lut(out_dir / "lut.json");
  const auto records = read_manifest(out_dir / "manifest.jsonl");
  REQUIRE(records.size() == 6);
  for (const auto& rec : records) {
    const Image2D original = read_pgm(data.root / rec.image_path);
    const Image2D matched = read_pgm(out_dir / rec.image_path);
    CHECK(matched == apply_hm(original, lut));
  }
}

TEST_CASE("mip collapses a slice directory to the per-pixel maximum") {
  const auto dir = temp_dir();
  Rng rng(17);
  Volume3D volume;
  for (int i = 0; i < 4; ++i) volume.slices.push_back(oracle::random_image(20, 12, 4096, rng));
  write_volume_dir(volume, dir / "vol");

  const auto out = dir / "mip.pgm";
  REQUIRE(run_cli("mip --volume " + (dir / "vol").string() + " --out " + out.string()) == 0);
  CHECK(read_pgm(out) == oracle::elementwise_max(volume.slices));
}

TEST_CASE("patchify emits one patch per record plus an index") {
  const TinyDataset data;
  const auto out_dir = data.root / "patches";
  REQUIRE(run_cli("patchify --manifest " + data.manifest.string() + " --images " +
                  data.root.string() + " --out " + out_dir.string() +
                  " --crop 16 --size 8 --seed 5") == 0);
  const auto index = nlohmann::json::parse(slurp(out_dir / "patches.json"));
  REQUIRE(index.size() == 6);
  for (std::size_t i = 0; i < index.size(); ++i) {
    const Image2D patch = read_pgm(out_dir / index[i].at("patch").get<std::string>());
    CHECK(patch.width() == 8);
    CHECK(patch.height() == 8);
    CHECK(index[i].at("label") == (i % 2 == 0 ? 0 : 1));
  }
}

TEST_CASE("run metadata round-trips the full configuration") {
  const auto dir = temp_dir();
  ExperimentConfig cfg = config_from_json(
      R"({"output_root": "out", "patch": {"crop_size": 128, "out_size": 64}})",
      dir.string());
  write_run_meta(cfg, "probe");
  const auto meta = nlohmann::json::parse(slurp(cfg.output_root / "meta" / "probe.json"));
  CHECK(meta.at("command") == "probe");
  const ExperimentConfig back =
      config_from_json(meta.at("config").dump(), dir.string());
  CHECK(config_to_json(back) == config_to_json(cfg));
}
