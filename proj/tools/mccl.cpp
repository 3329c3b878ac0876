// Command-line surface: synth / train / infer / eval / gradcheck / bench.
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "mccl/data.hpp"
#include "mccl/gcam.hpp"
#include "mccl/gradcheck.hpp"
#include "mccl/metrics.hpp"
#include "mccl/model.hpp"
#include "mccl/ops.hpp"
#include "mccl/rng.hpp"
#include "mccl/trainer.hpp"

namespace {

int run_synth(const mccl::SynthConfig& cfg, const std::string& out) {
  mccl::synth_generate(cfg, out);
  std::printf("wrote %d groups x %d images (%dpx) under %s\n", cfg.n_groups,
              cfg.images_per_group, cfg.size, out.c_str());
  return 0;
}

int run_train(const mccl::TrainConfig& cfg, const std::string& data,
              const std::string& gt, const std::string& ckpt, const std::string& log) {
  auto result = mccl::train(cfg, data, gt, ckpt, log);
  const auto& last = result.epochs.back();
  std::printf("trained %zu epochs; final L_sal=%.4f L_BCE=%.4f (skipped steps: %d)\n",
              result.epochs.size(), last.total, last.bce, result.skipped_steps);
  std::printf("checkpoint: %s\nlog: %s\n", ckpt.c_str(), log.c_str());
  return 0;
}

int run_infer(const std::string& ckpt, const std::string& data, const std::string& out) {
  mccl::infer(ckpt, data, out);
  std::printf("maps written under %s\n", out.c_str());
  return 0;
}

int run_eval(const std::string& pred, const std::string& gt, const std::string& tsv,
             const std::string& dataset) {
  auto report = mccl::evaluate_dataset(pred, gt);
  std::fputs(mccl::format_report_table(report, dataset).c_str(), stdout);
  if (!tsv.empty()) {
    mccl::write_report_tsv(report, dataset, tsv);
    std::printf("tsv report: %s\n", tsv.c_str());
  }
  return 0;
}

int run_gradcheck(std::uint64_t seed) {
  auto results = mccl::run_gradcheck_suite(seed);
  bool all_pass = true;
  for (const auto& r : results) {
    std::printf("%-30s max_rel_err=%.3e threshold=%.0e %s\n", r.name.c_str(),
                r.max_rel_err, r.threshold, r.pass ? "ok" : "FAIL");
    all_pass = all_pass && r.pass;
  }
  std::printf("%zu checks, %s\n", results.size(), all_pass ? "all ok" : "FAILURES");
  return all_pass ? 0 : 2;
}

int run_bench(int image_size, const std::vector<int>& batches, std::uint64_t seed,
              int repeats) {
  mccl::ModelConfig mc;
  mccl::Rng init(mccl::derive_seed(seed, mccl::tag_hash("model-init")));
  mccl::ParamStore<float> gen;
  mccl::build_generator_params(gen, mc, init);

  std::printf("inference throughput (image size %d)\n", image_size);
  std::printf("%8s %12s %12s\n", "batch", "ms/batch", "images/s");
  for (int b : batches) {
    if (b % 2 != 0) {
      std::printf("%8d  skipped (group size must be even)\n", b);
      continue;
    }
    mccl::Rng rng(seed + static_cast<std::uint64_t>(b));
    auto images = mccl::Tensor32::zeros({b, 3, image_size, image_size});
    for (std::int64_t i = 0; i < images.numel(); ++i)
      images[i] = static_cast<float>(rng.uniform());
    std::vector<std::vector<int>> perms{mccl::make_split_perm(b, 0)};

    auto once = [&]() {
      return mccl::generator_forward(images, {"bench"}, b, gen, mc, true, perms, false);
    };
    once();  // warm-up
    const auto start = std::chrono::steady_clock::now();
    for (int r = 0; r < repeats; ++r) once();
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double per_batch = secs / repeats;
    std::printf("%8d %12.2f %12.1f\n", b, per_batch * 1e3, b / per_batch);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MCCL: memory-aided contrastive consensus learning for co-salient object detection"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic co-saliency dataset");
  mccl::SynthConfig scfg;
  std::string synth_out;
  synth->add_option("--groups", scfg.n_groups, "number of shape-family groups");
  synth->add_option("--per-group", scfg.images_per_group, "images per group (even)");
  synth->add_option("--size", scfg.size, "image size, divisible by 32");
  synth->add_option("--seed", scfg.seed, "generator seed");
  synth->add_option("--occlusion-budget", scfg.occlusion_budget,
                    "max distractor overlap with the co-salient mask");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->set_config("--config");

  // train
  auto* train_cmd = app.add_subcommand("train", "train on a dataset");
  mccl::TrainConfig tcfg;
  std::string train_data, train_gt, train_ckpt = "mccl.ckpt", train_log = "train_log.tsv";
  std::vector<int> channels;
  bool no_mcm = false, no_ail = false, no_gcam = false, no_augment = false, quiet = false;
  train_cmd->add_option("--data", train_data, "images root (root/<group>/<stem>.png)")->required();
  train_cmd->add_option("--gt", train_gt, "ground-truth root")->required();
  train_cmd->add_option("--out", train_ckpt, "checkpoint path");
  train_cmd->add_option("--log", train_log, "per-epoch TSV log path");
  train_cmd->add_option("--image-size", tcfg.image_size, "training size, divisible by 32");
  train_cmd->add_option("--n-groups", tcfg.n_groups, "groups per batch (N)");
  train_cmd->add_option("--cap", tcfg.group_cap, "cap on images per group (S)");
  train_cmd->add_option("--epochs", tcfg.epochs);
  train_cmd->add_option("--lr", tcfg.lr);
  train_cmd->add_option("--lr-drop", tcfg.lr_drop_epochs_from_end,
                        "divide lr by 10 for the final K epochs");
  train_cmd->add_option("--beta", tcfg.beta, "memory momentum factor");
  train_cmd->add_option("--alpha", tcfg.alpha, "triplet margin");
  train_cmd->add_option("--lambda1", tcfg.weights.bce);
  train_cmd->add_option("--lambda2", tcfg.weights.iou);
  train_cmd->add_option("--lambda3", tcfg.weights.mcm);
  train_cmd->add_option("--lambda4", tcfg.weights.adv);
  train_cmd->add_option("--lambda5", tcfg.weights.disc);
  train_cmd->add_option("--weight-decay", tcfg.weight_decay);
  train_cmd->add_option("--clip-norm", tcfg.clip_norm);
  train_cmd->add_option("--seed", tcfg.seed);
  train_cmd->add_option("--channels", channels, "encoder channel ladder (4 values)")
      ->expected(4);
  train_cmd->add_flag("--no-mcm", no_mcm, "disable the memory-based contrastive module");
  train_cmd->add_flag("--no-ail", no_ail, "disable adversarial integrity learning");
  train_cmd->add_flag("--no-gcam", no_gcam, "disable group consensus aggregation");
  train_cmd->add_flag("--no-augment", no_augment);
  train_cmd->add_flag("--quiet", quiet, "suppress progress lines");
  train_cmd->add_flag("--clamp-triplet", tcfg.clamp_triplet,
                      "hinge the triplet loss at zero");
  train_cmd->set_config("--config");

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "predict saliency maps");
  std::string infer_ckpt, infer_data, infer_out;
  infer_cmd->add_option("--ckpt", infer_ckpt, "checkpoint")->required();
  infer_cmd->add_option("--data", infer_data, "images root")->required();
  infer_cmd->add_option("--out", infer_out, "output directory")->required();
  infer_cmd->set_config("--config");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate predictions against ground truth");
  std::string eval_pred, eval_gt, eval_tsv, eval_name = "dataset";
  eval_cmd->add_option("--pred", eval_pred, "prediction root")->required();
  eval_cmd->add_option("--gt", eval_gt, "ground-truth root")->required();
  eval_cmd->add_option("--tsv", eval_tsv, "also write a TSV report here");
  eval_cmd->add_option("--dataset", eval_name, "dataset label for the report");
  eval_cmd->set_config("--config");

  // gradcheck
  auto* gc_cmd = app.add_subcommand("gradcheck", "run the gradient verification suite");
  std::uint64_t gc_seed = 0;
  gc_cmd->add_option("--seed", gc_seed);

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "measure inference throughput");
  int bench_size = 64, bench_repeats = 10;
  std::vector<int> bench_batches{2, 4, 8, 16};
  std::uint64_t bench_seed = 0;
  bench_cmd->add_option("--image-size", bench_size);
  bench_cmd->add_option("--batches", bench_batches, "batch sizes to time");
  bench_cmd->add_option("--repeats", bench_repeats);
  bench_cmd->add_option("--seed", bench_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) return run_synth(scfg, synth_out);
    if (*train_cmd) {
      if (channels.size() == 4)
        tcfg.model.channels = {channels[0], channels[1], channels[2], channels[3]};
      tcfg.enable_mcm = !no_mcm;
      tcfg.enable_ail = !no_ail;
      tcfg.enable_gcam = !no_gcam;
      tcfg.augment_enabled = !no_augment;
      tcfg.verbose = !quiet;
      return run_train(tcfg, train_data, train_gt, train_ckpt, train_log);
    }
    if (*infer_cmd) return run_infer(infer_ckpt, infer_data, infer_out);
    if (*eval_cmd) return run_eval(eval_pred, eval_gt, eval_tsv, eval_name);
    if (*gc_cmd) return run_gradcheck(gc_seed);
    if (*bench_cmd) return run_bench(bench_size, bench_batches, bench_seed, bench_repeats);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
