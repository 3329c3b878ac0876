#include "mccl/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mccl/ail.hpp"
#include "mccl/checkpoint.hpp"
#include "mccl/error.hpp"
#include "mccl/gcam.hpp"
#include "mccl/image_io.hpp"
#include "mccl/ops.hpp"
#include "mccl/optimizer.hpp"

namespace fs = std::filesystem;

namespace mccl {

namespace {

// pooled [2C] vector over a contiguous row range of a feature map
template <typename S>
Tensor<S> pool_range(const Tensor<S>& feat, int start, int len) {
  return mean_axis0(global_avg_pool(slice(feat, 0, start, len)));
}

}  // namespace

template <typename S>
ForwardResult<S> generator_forward(const Tensor<S>& images,
                                   const std::vector<std::string>& class_ids,
                                   int per_group, ParamStore<S>& gen,
                                   const ModelConfig& mc, bool enable_gcam,
                                   const std::vector<std::vector<int>>& perms,
                                   bool training) {
  const int n = static_cast<int>(class_ids.size());
  if (images.dim(0) != n * per_group) {
    throw ContractError("generator_forward: batch " + std::to_string(images.dim(0)) +
                        " != groups * per_group");
  }
  auto enc = encode(images, gen, mc, training);

  ForwardResult<S> out;
  std::vector<Tensor<S>> consensus_parts;
  consensus_parts.reserve(static_cast<std::size_t>(n));
  for (int g = 0; g < n; ++g) {
    auto feat = slice(enc.final_, 0, g * per_group, per_group);
    if (enable_gcam) {
      GroupFeature<S> gf{class_ids[static_cast<std::size_t>(g)], feat};
      auto gc = gcam_forward(gf, gen, perms[static_cast<std::size_t>(g)]);
      consensus_parts.push_back(gc.feat_out);
      out.live_vecs[gc.class_id] = {gc.vec_a, gc.vec_b};
    } else {
      auto cons = concat<S>({feat, feat}, 1);
      consensus_parts.push_back(cons);
      out.live_vecs[class_ids[static_cast<std::size_t>(g)]] = {
          pool_range(cons, 0, per_group / 2),
          pool_range(cons, per_group / 2, per_group - per_group / 2)};
    }
  }
  auto consensus = n == 1 ? consensus_parts[0] : concat(consensus_parts, 0);
  out.logits = decode(consensus, enc, gen, mc, training);
  out.pred = clamp(sigmoid(out.logits), 1e-7, 1.0 - 1e-7);
  return out;
}

namespace {

Tensor32 stack_chw(const std::vector<Tensor32>& items) {
  const int c = items[0].dim(0), h = items[0].dim(1), w = items[0].dim(2);
  auto out = Tensor32::zeros({static_cast<int>(items.size()), c, h, w});
  const std::int64_t row = static_cast<std::int64_t>(c) * h * w;
  for (std::size_t i = 0; i < items.size(); ++i) {
    std::copy(items[i].data(), items[i].data() + row,
              out.data() + static_cast<std::int64_t>(i) * row);
  }
  return out;
}

void write_log_header(std::ofstream& log, const TrainConfig& cfg, int steps_per_epoch) {
  log << "# image_size=" << cfg.image_size << " n_groups=" << cfg.n_groups
      << " group_cap=" << cfg.group_cap << " epochs=" << cfg.epochs
      << " lr=" << cfg.lr << " lr_drop_epochs_from_end=" << cfg.lr_drop_epochs_from_end
      << " beta=" << cfg.beta << " alpha=" << cfg.alpha << '\n';
  log << "# lambda1=" << cfg.weights.bce << " lambda2=" << cfg.weights.iou
      << " lambda3=" << cfg.weights.mcm << " lambda4=" << cfg.weights.adv
      << " lambda5=" << cfg.weights.disc << " seed=" << cfg.seed
      << " mcm=" << cfg.enable_mcm << " ail=" << cfg.enable_ail
      << " gcam=" << cfg.enable_gcam << " steps_per_epoch=" << steps_per_epoch << '\n';
  log << "epoch\tL_BCE\tL_IoU";
  if (cfg.enable_mcm) log << "\tL_MCM";
  if (cfg.enable_ail) log << "\tL_adv\tL_disc";
  log << "\tL_sal\n";
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::string& data_root,
                  const std::string& gt_root, const std::string& checkpoint_path,
                  const std::string& log_path) {
  if (cfg.image_size % 32 != 0) {
    throw ContractError("train: image size must be divisible by 32");
  }
  auto groups = load_dataset(data_root, gt_root, cfg.image_size);
  if (static_cast<int>(groups.size()) < cfg.n_groups) {
    throw ContractError("train: dataset has " + std::to_string(groups.size()) +
                        " groups, batch needs " + std::to_string(cfg.n_groups));
  }

  Rng init_rng(derive_seed(cfg.seed, tag_hash("model-init")));
  ParamStore<float> gen;
  build_generator_params(gen, cfg.model, init_rng);
  gen.set_requires_grad(true);

  ParamStore<float> disc;
  if (cfg.enable_ail) {
    Rng disc_rng(derive_seed(cfg.seed, tag_hash("disc-init")));
    build_discriminator_params(disc, disc_rng);
    disc.set_requires_grad(true);
  }

  ConsensusMemory<float> memory(cfg.beta, cfg.alpha);
  AdamW<float> gen_opt(cfg.weight_decay);
  AdamW<float> disc_opt(cfg.weight_decay);

  const int steps_per_epoch =
      std::max<int>(1, static_cast<int>(groups.size()) / cfg.n_groups);

  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    if (!log) throw IoError("train: cannot write log " + log_path);
    write_log_header(log, cfg, steps_per_epoch);
  }

  TrainResult result;
  std::uint64_t step_counter = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = epoch > cfg.epochs - cfg.lr_drop_epochs_from_end
                          ? cfg.lr / cfg.lr_drop_factor
                          : cfg.lr;
    EpochStats acc;
    for (int step = 0; step < steps_per_epoch; ++step, ++step_counter) {
      const auto batch = make_batch(groups, cfg.n_groups, cfg.group_cap,
                                    derive_seed(cfg.seed, tag_hash("batch"), step_counter));
      const int s = batch.per_group;

      std::vector<Tensor32> ims, gts;
      std::vector<std::string> class_ids;
      std::vector<std::vector<int>> perms;
      std::uint64_t sample_tag = step_counter * 4096;
      for (const auto& slice_plan : batch.slices) {
        const auto& group = groups[static_cast<std::size_t>(slice_plan.group_index)];
        class_ids.push_back(slice_plan.class_id);
        for (int idx : slice_plan.sample_indices) {
          Tensor32 im = group.images[static_cast<std::size_t>(idx)];
          Tensor32 gt = group.gts[static_cast<std::size_t>(idx)];
          if (cfg.augment_enabled) {
            std::tie(im, gt) = augment(im, gt,
                                       derive_seed(cfg.seed, tag_hash("aug"), sample_tag),
                                       cfg.augment);
          }
          ++sample_tag;
          ims.push_back(im);
          gts.push_back(gt);
        }
        perms.push_back(make_split_perm(
            s, derive_seed(cfg.seed, tag_hash("shuffle"),
                           step_counter * 64 + static_cast<std::uint64_t>(perms.size()))));
      }
      auto images = stack_chw(ims);
      auto gt_maps = stack_chw(gts);

      Tape<float> gen_tape;
      auto fwd = generator_forward(images, class_ids, s, gen, cfg.model,
                                   cfg.enable_gcam, perms, true);

      Tensor32 mcm_term = Tensor32::scalar(0.0f);
      if (cfg.enable_mcm) {
        // freshest consensus lands in memory before the contrastive loss reads it
        for (const auto& cid : class_ids) {
          const auto& [va, vb] = fwd.live_vecs.at(cid);
          memory.update(cid, va, vb);
        }
        mcm_term = mcm_loss(class_ids, memory, fwd.live_vecs, cfg.clamp_triplet);
      }
      auto bce = bce_loss(fwd.pred, gt_maps);
      auto iou = iou_loss(fwd.pred, gt_maps);

      // alternating adversarial update, discriminator first on detached maps
      double disc_value = 0.0;
      if (cfg.enable_ail) {
        auto pred_const = detach(fwd.pred);
        Tape<float> disc_tape;
        auto dl = disc_loss(pred_const, gt_maps, images, disc, cfg.weights.disc, true);
        disc.zero_grads();
        disc_tape.backward(dl);
        clip_global_norm(disc, cfg.clip_norm);
        disc_opt.step(disc, lr);
        disc_value = dl.item();
      }

      Tensor32 adv_term = Tensor32::scalar(0.0f);
      if (cfg.enable_ail && cfg.weights.adv != 0.0) {
        adv_term = adv_generator_loss(fwd.pred, images, disc, true);
      }
      auto total = total_generator_loss(bce, iou, mcm_term, adv_term, cfg.weights);

      gen.zero_grads();
      if (cfg.enable_ail) disc.zero_grads();  // adv backward spills into disc grads
      gen_tape.backward(total);
      clip_global_norm(gen, cfg.clip_norm);
      gen_opt.step(gen, lr);

      acc.bce += bce.item();
      acc.iou += iou.item();
      acc.mcm += mcm_term.item();
      acc.adv += adv_term.item();
      acc.disc += disc_value;
      acc.total += total.item();
    }
    acc.bce /= steps_per_epoch;
    acc.iou /= steps_per_epoch;
    acc.mcm /= steps_per_epoch;
    acc.adv /= steps_per_epoch;
    acc.disc /= steps_per_epoch;
    acc.total /= steps_per_epoch;
    result.epochs.push_back(acc);

    if (log) {
      log << epoch << '\t' << acc.bce << '\t' << acc.iou;
      if (cfg.enable_mcm) log << '\t' << acc.mcm;
      if (cfg.enable_ail) log << '\t' << acc.adv << '\t' << acc.disc;
      log << '\t' << acc.total << '\n';
    }
    if (cfg.verbose && (epoch % 10 == 0 || epoch == 1 || epoch == cfg.epochs)) {
      std::cerr << "epoch " << epoch << "/" << cfg.epochs << "  L_sal=" << acc.total
                << "  L_BCE=" << acc.bce << '\n';
    }
  }
  result.skipped_steps = gen_opt.skipped_steps() + disc_opt.skipped_steps();

  if (!checkpoint_path.empty()) {
    std::map<std::string, Tensor32> ckpt;
    for (const auto& [name, t] : gen.params) ckpt[name] = t;
    for (const auto& [name, t] : gen.buffers) ckpt[name] = t;
    if (cfg.enable_ail) {
      for (const auto& [name, t] : disc.params) ckpt[name] = t;
      for (const auto& [name, t] : disc.buffers) ckpt[name] = t;
    }
    if (cfg.enable_mcm) {
      for (const auto& cid : memory.class_ids()) {
        ckpt["mcm/" + cid + "/A"] = memory.stored_a(cid);
        ckpt["mcm/" + cid + "/B"] = memory.stored_b(cid);
      }
    }
    ckpt["meta/image_size"] = Tensor32::from_data({1}, {static_cast<float>(cfg.image_size)});
    ckpt["meta/channels"] = Tensor32::from_data(
        {4}, {static_cast<float>(cfg.model.channels[0]), static_cast<float>(cfg.model.channels[1]),
              static_cast<float>(cfg.model.channels[2]), static_cast<float>(cfg.model.channels[3])});
    ckpt["meta/enable_gcam"] = Tensor32::from_data({1}, {cfg.enable_gcam ? 1.0f : 0.0f});
    save_checkpoint(checkpoint_path, ckpt);
  }
  return result;
}

namespace {

bool starts_with(const std::string& s, const char* prefix) {
  return s.rfind(prefix, 0) == 0;
}

bool ends_with(const std::string& s, const char* suffix) {
  const std::size_t n = std::string(suffix).size();
  return s.size() >= n && s.compare(s.size() - n, n, suffix) == 0;
}

}  // namespace

void infer(const std::string& checkpoint_path, const std::string& data_root,
           const std::string& out_dir) {
  auto tensors = load_checkpoint(checkpoint_path);
  auto meta = [&](const char* name) -> Tensor32& {
    auto it = tensors.find(name);
    if (it == tensors.end()) {
      throw CheckpointError(std::string("checkpoint lacks ") + name);
    }
    return it->second;
  };
  const int image_size = static_cast<int>(meta("meta/image_size")[0]);
  ModelConfig mc;
  for (int i = 0; i < 4; ++i)
    mc.channels[static_cast<std::size_t>(i)] = static_cast<int>(meta("meta/channels")[i]);
  const bool enable_gcam = meta("meta/enable_gcam")[0] != 0.0f;

  // training-only state (memory, discriminator) never enters the live model
  ParamStore<float> gen;
  for (auto& [name, t] : tensors) {
    if (starts_with(name, "disc/") || starts_with(name, "mcm/") ||
        starts_with(name, "meta/"))
      continue;
    if (ends_with(name, ".rm") || ends_with(name, ".rv"))
      gen.buffers[name] = t;
    else
      gen.params[name] = t;
  }

  auto groups = load_dataset(data_root, "", image_size);
  constexpr std::uint64_t kInferShuffleSeed = 0;
  for (const auto& group : groups) {
    const int s = static_cast<int>(group.images.size());
    auto items = group.images;
    if (enable_gcam && s % 2 != 0) items.push_back(items.back());  // even split pad
    const int padded = static_cast<int>(items.size());
    auto images = stack_chw(items);

    std::vector<std::vector<int>> perms{make_split_perm(padded, kInferShuffleSeed)};
    auto fwd = generator_forward(images, {group.class_id}, padded, gen, mc,
                                 enable_gcam, perms, false);
    auto logits = padded == s ? fwd.logits : slice(fwd.logits, 0, 0, s);
    auto maps = predict_maps(logits, group.orig_sizes);

    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / group.class_id, ec);
    if (ec) throw IoError("infer: cannot create " + out_dir + "/" + group.class_id);
    for (int i = 0; i < s; ++i) {
      const auto& m = maps[static_cast<std::size_t>(i)];
      ImageU8 img;
      img.height = m.dim(0);
      img.width = m.dim(1);
      img.channels = 1;
      img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
      for (std::int64_t p = 0; p < m.numel(); ++p)
        img.pixels[static_cast<std::size_t>(p)] =
            static_cast<unsigned char>(std::lround(m[p] * 255.0f));
      write_png((fs::path(out_dir) / group.class_id /
                 (group.stems[static_cast<std::size_t>(i)] + ".png"))
                    .string(),
                img);
    }
  }
}

template ForwardResult<float> generator_forward<float>(
    const Tensor<float>&, const std::vector<std::string>&, int, ParamStore<float>&,
    const ModelConfig&, bool, const std::vector<std::vector<int>>&, bool);
template ForwardResult<double> generator_forward<double>(
    const Tensor<double>&, const std::vector<std::string>&, int, ParamStore<double>&,
    const ModelConfig&, bool, const std::vector<std::vector<int>>&, bool);

}  // namespace mccl
