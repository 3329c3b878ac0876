#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mccl/data.hpp"
#include "mccl/error.hpp"
#include "mccl/ops.hpp"
#include "oracles.hpp"

using namespace mccl;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("mccl_test_" + tag);
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

// groups of n dummy 1x1 images for batcher tests
std::vector<ImageGroup> dummy_groups(const std::vector<int>& sizes) {
  std::vector<ImageGroup> groups;
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    ImageGroup grp;
    grp.class_id = "g" + std::to_string(g);
    for (int i = 0; i < sizes[g]; ++i) {
      grp.images.push_back(Tensor32::zeros({3, 1, 1}));
      grp.gts.push_back(Tensor32::full({1, 1, 1}, 1.0f));
      grp.stems.push_back("s" + std::to_string(i));
      grp.orig_sizes.emplace_back(1, 1);
    }
    groups.push_back(std::move(grp));
  }
  return groups;
}

}  // namespace

TEST_CASE("synth_generate writes the full dataset with nonempty masks") {
  const auto dir = temp_dir("synth");
  SynthConfig cfg;
  cfg.n_groups = 6;
  cfg.images_per_group = 12;
  cfg.size = 64;
  cfg.seed = 7;
  synth_generate(cfg, dir);

  auto groups = load_dataset(dir + "/images", dir + "/gt");
  REQUIRE(groups.size() == 6);
  int total = 0;
  for (const auto& g : groups) {
    total += static_cast<int>(g.images.size());
    for (const auto& gt : g.gts) {
      double fg = 0;
      for (std::int64_t i = 0; i < gt.numel(); ++i) fg += gt[i];
      CHECK(fg > 0);
    }
  }
  CHECK(total == 72);
  CHECK(fs::exists(fs::path(dir) / "manifest.tsv"));
  fs::remove_all(dir);
}

TEST_CASE("synth_generate is byte-for-byte reproducible per seed") {
  const auto dir1 = temp_dir("synth_a");
  const auto dir2 = temp_dir("synth_b");
  SynthConfig cfg;
  cfg.n_groups = 2;
  cfg.images_per_group = 4;
  cfg.size = 32;
  cfg.seed = 11;
  synth_generate(cfg, dir1);
  synth_generate(cfg, dir2);
  for (const auto& entry : fs::recursive_directory_iterator(dir1)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir1);
    CHECK(file_bytes(entry.path()) == file_bytes(fs::path(dir2) / rel));
  }
  fs::remove_all(dir1);
  fs::remove_all(dir2);
}

TEST_CASE("distractor overlap stays inside the occlusion budget") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    const int family = static_cast<int>(seed % shape_families().size());
    auto sample = render_sample(family, 64, rng, 1, 2, 0.2);
    std::int64_t gt_area = 0;
    for (auto v : sample.gt) gt_area += v;
    REQUIRE(gt_area > 0);
    std::int64_t overlap = 0;
    for (std::size_t i = 0; i < sample.gt.size(); ++i) {
      if (!sample.gt[i]) continue;
      for (const auto& mask : sample.distractor_masks)
        if (mask[i]) {
          ++overlap;
          break;  // union, not multiset
        }
    }
    CHECK(static_cast<double>(overlap) <= 0.2 * static_cast<double>(gt_area) + 1e-9);
  }
}

TEST_CASE("loading synth output round-trips the masks exactly") {
  const auto dir = temp_dir("roundtrip");
  SynthConfig cfg;
  cfg.n_groups = 1;
  cfg.images_per_group = 2;
  cfg.size = 32;
  cfg.seed = 3;
  synth_generate(cfg, dir);

  Rng rng(derive_seed(3, tag_hash("synth"), 0));
  auto sample = render_sample(0, 32, rng, cfg.min_distractors, cfg.max_distractors,
                              cfg.occlusion_budget);
  auto groups = load_dataset(dir + "/images", dir + "/gt");
  const auto& gt = groups[0].gts[0];
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      CHECK(gt[static_cast<std::int64_t>(y) * 32 + x] ==
            (sample.gt[static_cast<std::size_t>(y) * 32 + x] ? 1.0f : 0.0f));
  fs::remove_all(dir);
}

TEST_CASE("loader: single-image groups load; missing gt names the stem") {
  const auto dir = temp_dir("loader");
  SynthConfig cfg;
  cfg.n_groups = 1;
  cfg.images_per_group = 2;
  cfg.size = 32;
  synth_generate(cfg, dir);
  fs::remove(fs::path(dir) / "images" / "circle" / "im0001.png");
  auto groups = load_dataset(dir + "/images", dir + "/gt");
  CHECK(groups[0].images.size() == 1);

  // now strip a gt file: the image remains, the load must fail loudly
  fs::remove(fs::path(dir) / "gt" / "circle" / "im0000.png");
  CHECK_THROWS_WITH_AS(load_dataset(dir + "/images", dir + "/gt"),
                       doctest::Contains("im0000"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("loader resizes mixed-size images to the training size") {
  const auto dir = temp_dir("mixed");
  SynthConfig cfg;
  cfg.n_groups = 1;
  cfg.images_per_group = 2;
  cfg.size = 32;
  synth_generate(cfg, dir);
  // regenerate one member at a different size under the same group
  {
    SynthConfig big = cfg;
    big.size = 64;
    big.seed = 5;
    const auto dir2 = temp_dir("mixed_big");
    synth_generate(big, dir2);
    fs::copy(fs::path(dir2) / "images" / "circle" / "im0000.png",
             fs::path(dir) / "images" / "circle" / "im0002.png");
    fs::copy(fs::path(dir2) / "gt" / "circle" / "im0000.png",
             fs::path(dir) / "gt" / "circle" / "im0002.png");
    fs::remove_all(dir2);
  }
  auto groups = load_dataset(dir + "/images", dir + "/gt", 32);
  REQUIRE(groups[0].images.size() == 3);
  for (const auto& im : groups[0].images) CHECK(im.shape() == Shape{3, 32, 32});
  CHECK(groups[0].orig_sizes[2] == std::pair<int, int>{64, 64});

  // the resized member matches the bilinear oracle applied to the original
  auto orig = read_image((fs::path(dir) / "images" / "circle" / "im0002.png").string());
  auto orig_t = Tensor32::zeros({1, 3, 64, 64});
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      for (int c = 0; c < 3; ++c)
        orig_t[((static_cast<std::int64_t>(c) * 64) + y) * 64 + x] =
            orig.pixels[orig.index(y, x, c)] / 255.0f;
  auto expect = oracle::naive_bilinear(orig_t, 32, 32);
  const auto& got = groups[0].images[2];
  for (std::int64_t i = 0; i < got.numel(); ++i)
    CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-5));
  fs::remove_all(dir);
}

TEST_CASE("augment: involution, identity, and gt integrity") {
  Rng rng(81);
  auto sample = render_sample(1, 32, rng, 1, 1, 0.2);
  auto img = Tensor32::zeros({3, 32, 32});
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      for (int c = 0; c < 3; ++c)
        img[((static_cast<std::int64_t>(c) * 32) + y) * 32 + x] =
            sample.image.pixels[sample.image.index(y, x, c)] / 255.0f;
  auto gt = Tensor32::zeros({1, 32, 32});
  for (std::int64_t i = 0; i < gt.numel(); ++i) gt[i] = sample.gt[static_cast<std::size_t>(i)];

  AugmentConfig flip_only;
  flip_only.p_flip = 1.0;
  flip_only.p_jitter = 0.0;
  flip_only.p_rotate = 0.0;
  auto [img1, gt1] = augment(img, gt, 1, flip_only);
  auto [img2, gt2] = augment(img1, gt1, 2, flip_only);
  for (std::int64_t i = 0; i < img.numel(); ++i) CHECK(img2[i] == img[i]);
  for (std::int64_t i = 0; i < gt.numel(); ++i) CHECK(gt2[i] == gt[i]);

  AugmentConfig off;
  off.p_flip = off.p_jitter = off.p_rotate = 0.0;
  auto [img3, gt3] = augment(img, gt, 3, off);
  for (std::int64_t i = 0; i < img.numel(); ++i) CHECK(img3[i] == img[i]);

  AugmentConfig on;
  on.p_flip = on.p_jitter = on.p_rotate = 0.5;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    auto [ai, ag] = augment(img, gt, seed, on);
    double fg = 0;
    for (std::int64_t i = 0; i < ag.numel(); ++i) {
      CHECK((ag[i] == 0.0f || ag[i] == 1.0f));
      fg += ag[i];
    }
    CHECK(fg > 0);
    CHECK(ag.shape() == gt.shape());
  }
}

TEST_CASE("make_batch implements the capped even-floor group size") {
  CHECK(make_batch(dummy_groups({10, 60}), 2, 48, 1).per_group == 10);
  CHECK(make_batch(dummy_groups({60, 60}), 2, 48, 2).per_group == 48);
  CHECK(make_batch(dummy_groups({7, 9}), 2, 48, 3).per_group == 6);
  CHECK_THROWS_AS(make_batch(dummy_groups({4}), 2, 48, 4), ContractError);
  CHECK_THROWS_AS(make_batch(dummy_groups({1, 8}), 2, 48, 5), ContractError);
}

TEST_CASE("make_batch never duplicates an image and samples distinct classes") {
  auto groups = dummy_groups({9, 13, 20, 5});
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    auto batch = make_batch(groups, 2, 16, seed);
    CHECK(batch.per_group % 2 == 0);
    CHECK(batch.slices.size() == 2);
    CHECK(batch.slices[0].group_index != batch.slices[1].group_index);
    for (const auto& slice : batch.slices) {
      auto sorted = slice.sample_indices;
      std::sort(sorted.begin(), sorted.end());
      CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
      CHECK(static_cast<int>(sorted.size()) == batch.per_group);
    }
  }
}

TEST_CASE("uniform class sampling starves no class over many batches") {
  auto groups = dummy_groups({8, 8, 8, 8, 8, 8});
  std::vector<int> hits(6, 0);
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    auto batch = make_batch(groups, 2, 8, seed);
    for (const auto& slice : batch.slices)
      ++hits[static_cast<std::size_t>(slice.group_index)];
  }
  for (int h : hits) CHECK(h > 0);
}
