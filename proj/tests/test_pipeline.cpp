#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mccl/checkpoint.hpp"
#include "mccl/data.hpp"
#include "mccl/error.hpp"
#include "mccl/trainer.hpp"

using namespace mccl;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("mccl_pipe_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::vector<char> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return std::vector<char>(std::istreambuf_iterator<char>(in),
                           std::istreambuf_iterator<char>());
}

std::string make_tiny_dataset(const std::string& tag, int groups = 4, int per = 4,
                              std::uint64_t seed = 5) {
  const auto dir = temp_dir(tag);
  SynthConfig cfg;
  cfg.n_groups = groups;
  cfg.images_per_group = per;
  cfg.size = 32;
  cfg.seed = seed;
  synth_generate(cfg, dir);
  return dir;
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.image_size = 32;
  cfg.epochs = 2;
  cfg.group_cap = 4;
  cfg.model.channels = {4, 8, 16, 32};
  cfg.seed = 1;
  return cfg;
}

}  // namespace

TEST_CASE("checkpoint round trip: save, load, save gives identical bytes") {
  const auto dir = temp_dir("ckpt");
  std::map<std::string, Tensor32> tensors;
  tensors["a/w"] = Tensor32::from_data({2, 2}, {1.0f, -2.5f, 0.0f, 3.25f});
  tensors["b"] = Tensor32::from_data({3}, {0.1f, 0.2f, 0.3f});
  const auto p1 = fs::path(dir) / "one.ckpt";
  const auto p2 = fs::path(dir) / "two.ckpt";
  save_checkpoint(p1.string(), tensors);
  auto loaded = load_checkpoint(p1.string());
  REQUIRE(loaded.size() == 2);
  CHECK(loaded.at("a/w").shape() == Shape{2, 2});
  CHECK(loaded.at("a/w")[1] == -2.5f);
  save_checkpoint(p2.string(), loaded);
  CHECK(file_bytes(p1) == file_bytes(p2));
  fs::remove_all(dir);
}

TEST_CASE("checkpoint loader rejects garbage") {
  const auto dir = temp_dir("ckpt_bad");
  const auto p = fs::path(dir) / "bad.ckpt";
  std::ofstream(p) << "not a checkpoint";
  CHECK_THROWS_AS(load_checkpoint(p.string()), CheckpointError);
  fs::remove_all(dir);
}

TEST_CASE("two-epoch smoke run trains and writes a loadable checkpoint") {
  const auto data = make_tiny_dataset("smoke");
  const auto out = temp_dir("smoke_out");
  auto cfg = tiny_config();
  cfg.verbose = false;

  auto result = train(cfg, data + "/images", data + "/gt",
                      out + "/model.ckpt", out + "/log.tsv");
  CHECK(result.epochs.size() == 2);
  CHECK(result.skipped_steps == 0);
  for (const auto& e : result.epochs) {
    CHECK(std::isfinite(e.total));
    CHECK(e.bce > 0.0);
  }

  auto ckpt = load_checkpoint(out + "/model.ckpt");
  CHECK(ckpt.count("enc/stem.w") == 1);
  CHECK(ckpt.count("gcam/q.w") == 1);
  CHECK(ckpt.count("dec/head.w") == 1);
  CHECK(ckpt.count("disc/b1.w") == 1);
  CHECK(ckpt.count("meta/image_size") == 1);
  bool has_memory = false;
  for (const auto& [name, t] : ckpt)
    if (name.rfind("mcm/", 0) == 0) has_memory = true;
  CHECK(has_memory);

  // log layout: header comments then the column line with all losses
  std::ifstream log(out + "/log.tsv");
  std::string line;
  std::getline(log, line);
  CHECK(line.rfind("#", 0) == 0);
  std::getline(log, line);
  std::getline(log, line);
  CHECK(line.find("L_MCM") != std::string::npos);
  CHECK(line.find("L_adv") != std::string::npos);
  CHECK(line.find("L_disc") != std::string::npos);
  fs::remove_all(data);
  fs::remove_all(out);
}

TEST_CASE("disabled modules vanish from the log columns") {
  const auto data = make_tiny_dataset("ablation");
  const auto out = temp_dir("ablation_out");
  auto cfg = tiny_config();
  cfg.epochs = 1;
  cfg.enable_mcm = false;
  cfg.enable_ail = false;
  train(cfg, data + "/images", data + "/gt", out + "/model.ckpt", out + "/log.tsv");

  std::ifstream log(out + "/log.tsv");
  std::string line, columns;
  while (std::getline(log, line))
    if (line.rfind("epoch", 0) == 0) columns = line;
  CHECK(columns.find("L_BCE") != std::string::npos);
  CHECK(columns.find("L_MCM") == std::string::npos);
  CHECK(columns.find("L_adv") == std::string::npos);
  CHECK(columns.find("L_disc") == std::string::npos);

  auto ckpt = load_checkpoint(out + "/model.ckpt");
  for (const auto& [name, t] : ckpt) {
    CHECK(name.rfind("disc/", 0) != 0);
    CHECK(name.rfind("mcm/", 0) != 0);
  }
  fs::remove_all(data);
  fs::remove_all(out);
}

TEST_CASE("identical seeds give bit-identical checkpoints") {
  const auto data = make_tiny_dataset("determinism");
  const auto out = temp_dir("determinism_out");
  auto cfg = tiny_config();
  cfg.epochs = 1;
  train(cfg, data + "/images", data + "/gt", out + "/a.ckpt", "");
  train(cfg, data + "/images", data + "/gt", out + "/b.ckpt", "");
  CHECK(file_bytes(fs::path(out) / "a.ckpt") == file_bytes(fs::path(out) / "b.ckpt"));

  auto cfg2 = cfg;
  cfg2.seed = 99;
  train(cfg2, data + "/images", data + "/gt", out + "/c.ckpt", "");
  CHECK(file_bytes(fs::path(out) / "a.ckpt") != file_bytes(fs::path(out) / "c.ckpt"));
  fs::remove_all(data);
  fs::remove_all(out);
}

TEST_CASE("inference: full coverage, determinism, training-state independence") {
  const auto data = make_tiny_dataset("infer");
  const auto out = temp_dir("infer_out");
  auto cfg = tiny_config();
  cfg.epochs = 1;
  train(cfg, data + "/images", data + "/gt", out + "/model.ckpt", "");

  infer(out + "/model.ckpt", data + "/images", out + "/maps1");
  infer(out + "/model.ckpt", data + "/images", out + "/maps2");

  int produced = 0;
  for (const auto& entry : fs::recursive_directory_iterator(out + "/maps1"))
    if (entry.is_regular_file()) ++produced;
  CHECK(produced == 16);  // 4 groups x 4 images

  for (const auto& entry : fs::recursive_directory_iterator(out + "/maps1")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), out + "/maps1");
    CHECK(file_bytes(entry.path()) == file_bytes(fs::path(out + "/maps2") / rel));
  }

  // stripping training-only tensors must not change the outputs
  auto ckpt = load_checkpoint(out + "/model.ckpt");
  std::map<std::string, Tensor32> stripped;
  for (const auto& [name, t] : ckpt)
    if (name.rfind("mcm/", 0) != 0 && name.rfind("disc/", 0) != 0)
      stripped[name] = t;
  CHECK(stripped.size() < ckpt.size());
  save_checkpoint(out + "/stripped.ckpt", stripped);
  infer(out + "/stripped.ckpt", data + "/images", out + "/maps3");
  for (const auto& entry : fs::recursive_directory_iterator(out + "/maps1")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), out + "/maps1");
    CHECK(file_bytes(entry.path()) == file_bytes(fs::path(out + "/maps3") / rel));
  }
  fs::remove_all(data);
  fs::remove_all(out);
}

TEST_CASE("inference handles odd-sized groups") {
  const auto data = make_tiny_dataset("odd");
  // drop one image from one group -> size 3
  fs::remove(fs::path(data) / "images" / "circle" / "im0003.png");
  fs::remove(fs::path(data) / "gt" / "circle" / "im0003.png");
  const auto out = temp_dir("odd_out");
  auto cfg = tiny_config();
  cfg.epochs = 1;
  train(cfg, data + "/images", data + "/gt", out + "/model.ckpt", "");
  infer(out + "/model.ckpt", data + "/images", out + "/maps");
  int produced = 0;
  for (const auto& entry : fs::recursive_directory_iterator(out + "/maps"))
    if (entry.is_regular_file()) ++produced;
  CHECK(produced == 15);
  fs::remove_all(data);
  fs::remove_all(out);
}

TEST_CASE("a zeroed adversarial weight reproduces the non-adversarial step exactly") {
  const auto data = make_tiny_dataset("lambda4");
  const auto out = temp_dir("lambda4_out");

  auto with_ail = tiny_config();
  with_ail.epochs = 1;
  with_ail.weights.adv = 0.0;
  train(with_ail, data + "/images", data + "/gt", out + "/zero_lambda.ckpt", "");

  auto without_ail = tiny_config();
  without_ail.epochs = 1;
  without_ail.enable_ail = false;
  train(without_ail, data + "/images", data + "/gt", out + "/no_ail.ckpt", "");

  auto a = load_checkpoint(out + "/zero_lambda.ckpt");
  auto b = load_checkpoint(out + "/no_ail.ckpt");
  for (const auto& [name, t] : b) {
    if (name.rfind("meta/", 0) == 0) continue;
    REQUIRE(a.count(name) == 1);
    const auto& other = a.at(name);
    REQUIRE(other.numel() == t.numel());
    for (std::int64_t i = 0; i < t.numel(); ++i) {
      REQUIRE(other[i] == t[i]);  // bit-for-bit
    }
  }
  fs::remove_all(data);
  fs::remove_all(out);
}
