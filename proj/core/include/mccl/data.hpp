#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mccl/image_io.hpp"
#include "mccl/rng.hpp"
#include "mccl/tensor.hpp"

namespace mccl {

// One semantic class: images [3,H,W] in [0,1] with binary masks [1,H,W].
// gts may be left undefined when a dataset is loaded for inference only.
struct ImageGroup {
  std::string class_id;
  std::vector<Tensor32> images;
  std::vector<Tensor32> gts;
  std::vector<std::string> stems;
  std::vector<std::pair<int, int>> orig_sizes;  // (h, w) before any loader resize
};

// Index-level batch plan: N groups, S samples each, S even.
struct GroupBatch {
  struct Slice {
    int group_index = -1;
    std::string class_id;
    std::vector<int> sample_indices;
  };
  std::vector<Slice> slices;
  int per_group = 0;
};

struct SynthConfig {
  int n_groups = 6;
  int images_per_group = 12;
  int size = 64;
  std::uint64_t seed = 0;
  int min_distractors = 1;
  int max_distractors = 2;
  double occlusion_budget = 0.2;  // distractor overlap allowance vs gt area
};

// Rendered sample with the placement masks needed for occlusion audits.
struct RenderedSample {
  ImageU8 image;                       // RGB
  std::vector<unsigned char> gt;       // size*size, {0,1}
  std::vector<std::vector<unsigned char>> distractor_masks;
};

const std::vector<std::string>& shape_families();

RenderedSample render_sample(int family, int size, Rng& rng, int min_distractors,
                             int max_distractors, double occlusion_budget);

// Writes <out_dir>/images/<group>/<stem>.png, <out_dir>/gt/<group>/<stem>.png
// and <out_dir>/manifest.tsv (columns: group, stem, seed). Byte-identical
// output for identical configs.
void synth_generate(const SynthConfig& cfg, const std::string& out_dir);

// Layout: root/<group>/<stem>.{png,jpg} and gt_root/<group>/<stem>.png.
// Pixel values scaled to [0,1], gt binarized at 0.5; groups sorted by name,
// images by stem. resize_to > 0 resizes every image (and gt) to that square
// size, keeping the original size on record. Empty gt_root skips masks.
std::vector<ImageGroup> load_dataset(const std::string& root,
                                     const std::string& gt_root, int resize_to = 0);

struct AugmentConfig {
  double p_flip = 0.5;
  double p_jitter = 0.5;
  double p_rotate = 0.5;
  double jitter_lo = 0.8, jitter_hi = 1.2;
  double max_rotate_deg = 10.0;
};

// Horizontal flip (both), brightness/contrast/saturation jitter (image only),
// small rotation with bilinear sampling and border replication (both, gt
// re-binarized).
std::pair<Tensor32, Tensor32> augment(const Tensor32& image, const Tensor32& gt,
                                      std::uint64_t seed,
                                      const AugmentConfig& cfg = {});

// Samples N distinct classes and S images per class without replacement,
// S = even_floor(min(group sizes, cap)).
GroupBatch make_batch(const std::vector<ImageGroup>& groups, int n, int cap,
                      std::uint64_t seed);

}  // namespace mccl
