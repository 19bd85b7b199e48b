// hmadapt: histogram-matching + small-scale adaptation pipeline driver.
//
// Subcommands either run one standalone data operation (split/cdf/match/
// mip/patchify) or one stage of the config-driven experiment
// (synth/train/finetune/eval/report). All heavy lifting lives in the
// library; this file only parses arguments and maps errors to exit codes:
//   0 success, 2 bad configuration/usage, 3 bad data, 4 I/O failure.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hmadapt/config.hpp"
#include "hmadapt/errors.hpp"
#include "hmadapt/pipeline.hpp"

namespace {

struct HmFlag {
  bool on = false;
  bool off = false;

  // Config default unless the user forced one side.
  bool resolve(bool config_default) const {
    if (on) return true;
    if (off) return false;
    return config_default;
  }
};

void add_hm_flags(CLI::App* cmd, HmFlag& flag) {
  auto* on = cmd->add_flag("--hm", flag.on, "force histogram matching on");
  auto* off = cmd->add_flag("--no-hm", flag.off, "force histogram matching off");
  on->excludes(off);
}

int run(int argc, char** argv) {
  CLI::App app{"cross-domain harmonization and adaptation pipeline"};
  app.require_subcommand(1);

  // ---- standalone data commands ----
  hmadapt::SplitArgs split_args;
  auto* split = app.add_subcommand("split", "assign patient-level splits in a manifest");
  split->add_option("--manifest", split_args.manifest_in, "input manifest (jsonl)")->required();
  split->add_option("--out", split_args.manifest_out, "output manifest (jsonl)")->required();
  split->add_option("--train", split_args.ratios.train, "train fraction");
  split->add_option("--val", split_args.ratios.val, "val fraction");
  split->add_option("--test", split_args.ratios.test, "test fraction");
  split->add_option("--seed", split_args.seed, "split seed");

  hmadapt::CdfArgs cdf_args;
  std::string cdf_split = "train";
  auto* cdf = app.add_subcommand("cdf", "estimate a class-stratified average intensity CDF");
  cdf->add_option("--manifest", cdf_args.manifest, "manifest (jsonl)")->required();
  cdf->add_option("--images", cdf_args.image_root, "image root directory")->required();
  cdf->add_option("--out", cdf_args.out_path, "output CDF (json)")->required();
  cdf->add_option("--samples", cdf_args.sample_count, "images sampled per domain");
  cdf->add_option("--seed", cdf_args.seed, "sampling seed");
  cdf->add_option("--split", cdf_split, "split to sample (train/val/test/all)");

  hmadapt::MatchArgs match_args;
  auto* match = app.add_subcommand("match", "histogram-match a manifest's images");
  match->add_option("--manifest", match_args.manifest, "manifest (jsonl)")->required();
  match->add_option("--images", match_args.image_root, "image root directory")->required();
  match->add_option("--source-cdf", match_args.source_cdf, "CDF of the images being remapped")
      ->required();
  match->add_option("--reference-cdf", match_args.reference_cdf, "CDF to match against")
      ->required();
  match->add_option("--out", match_args.out_dir, "output directory")->required();

  hmadapt::MipArgs mip_args;
  auto* mip = app.add_subcommand("mip", "maximum-intensity projection of a slice volume");
  mip->add_option("--volume", mip_args.volume_dir, "volume directory")->required();
  mip->add_option("--out", mip_args.out_path, "output image (pgm)")->required();

  hmadapt::PatchifyArgs patchify_args;
  auto* patchify = app.add_subcommand("patchify", "extract one training patch per record");
  patchify->add_option("--manifest", patchify_args.manifest, "manifest (jsonl)")->required();
  patchify->add_option("--images", patchify_args.image_root, "image root directory")->required();
  patchify->add_option("--out", patchify_args.out_dir, "output directory")->required();
  patchify->add_option("--crop", patchify_args.settings.spec.crop_size, "crop size (px)");
  patchify->add_option("--size", patchify_args.settings.spec.out_size, "output size (px)");
  patchify->add_option("--foreground-threshold", patchify_args.settings.foreground_threshold,
                       "foreground fraction of max intensity");
  patchify->add_option("--seed", patchify_args.seed, "placement seed");

  // ---- config-driven experiment commands ----
  std::string config_path;
  std::string mode_str = "last_layer";
  std::string domain = "target";
  HmFlag finetune_hm, eval_hm;

  auto add_config = [&config_path](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config (json)")->required();
  };

  auto* synth = app.add_subcommand("synth", "generate the synthetic two-domain dataset");
  add_config(synth);

  auto* train = app.add_subcommand("train", "train source-domain base models");
  add_config(train);

  const auto mode_names = CLI::IsMember({"test_only", "last_layer", "spottune"});
  auto* finetune = app.add_subcommand("finetune", "adapt base models on the target domain");
  add_config(finetune);
  finetune->add_option("--mode", mode_str, "test_only / last_layer / spottune")
      ->check(mode_names);
  add_hm_flags(finetune, finetune_hm);

  auto* eval = app.add_subcommand("eval", "evaluate a model on a domain's test split");
  add_config(eval);
  eval->add_option("--mode", mode_str, "test_only / last_layer / spottune")->check(mode_names);
  eval->add_option("--domain", domain, "source / target")
      ->check(CLI::IsMember({"source", "target"}));
  add_hm_flags(eval, eval_hm);

  auto* report = app.add_subcommand("report", "run the full experiment grid");
  add_config(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (split->parsed()) {
    hmadapt::cmd_split(split_args);
    return 0;
  }
  if (cdf->parsed()) {
    if (cdf_split == "all") {
      cdf_args.split = std::nullopt;
    } else {
      cdf_args.split = hmadapt::split_from_string(cdf_split);
    }
    hmadapt::cmd_cdf(cdf_args);
    return 0;
  }
  if (match->parsed()) {
    hmadapt::cmd_match(match_args);
    return 0;
  }
  if (mip->parsed()) {
    hmadapt::cmd_mip(mip_args);
    return 0;
  }
  if (patchify->parsed()) {
    hmadapt::cmd_patchify(patchify_args);
    return 0;
  }

  hmadapt::ExperimentConfig cfg = hmadapt::load_config(config_path);
  if (synth->parsed()) {
    hmadapt::cmd_synth(cfg);
  } else if (train->parsed()) {
    hmadapt::cmd_train(cfg);
  } else if (finetune->parsed()) {
    hmadapt::cmd_finetune(cfg, hmadapt::finetune_mode_from_string(mode_str),
                          finetune_hm.resolve(cfg.hm.enabled));
  } else if (eval->parsed()) {
    hmadapt::EvalReport rep = hmadapt::cmd_eval(
        cfg, hmadapt::finetune_mode_from_string(mode_str), domain,
        eval_hm.resolve(cfg.hm.enabled));
    std::printf("%s %s %s mean_auc=%.6f std_auc=%.6f\n", rep.mode.c_str(),
                rep.domain.c_str(), rep.hist_match ? "hm" : "raw", rep.mean_auc,
                rep.std_auc);
  } else if (report->parsed()) {
    hmadapt::cmd_report(cfg);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const hmadapt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const hmadapt::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const hmadapt::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
