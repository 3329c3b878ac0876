#include "mccl/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mccl/error.hpp"
#include "mccl/ops.hpp"

namespace fs = std::filesystem;

namespace mccl {

const std::vector<std::string>& shape_families() {
  static const std::vector<std::string> families = {
      "circle", "square", "triangle", "star", "cross", "ring", "diamond", "crescent"};
  return families;
}

namespace {

constexpr double kPi = 3.14159265358979323846;

bool inside_family(int family, double u, double v) {
  const double r2 = u * u + v * v;
  switch (family) {
    case 0:  // circle
      return r2 <= 1.0;
    case 1:  // square
      return std::max(std::abs(u), std::abs(v)) <= 0.88;
    case 2: {  // equilateral triangle, circumradius 1
      for (int k = 0; k < 3; ++k) {
        const double a = k * 2.0 * kPi / 3.0;
        if (u * std::cos(a) + v * std::sin(a) > 0.5) return false;
      }
      return true;
    }
    case 3: {  // 5-point star, straight edges between outer 1 and inner 0.45
      const double r = std::sqrt(r2);
      if (r > 1.0) return false;
      const double sector = 2.0 * kPi / 5.0;
      double a = std::fmod(std::atan2(v, u) + 2.0 * kPi, sector);
      const double d = std::min(a, sector - a);  // angle from nearest spike, [0, 36 deg]
      const double beta = sector / 2.0;
      const double r0 = 1.0, r1 = 0.45;
      const double bound =
          (r0 * r1 * std::sin(beta)) / (r0 * std::sin(d) + r1 * std::sin(beta - d));
      return r <= bound;
    }
    case 4:  // cross
      return (std::abs(u) <= 0.34 && std::abs(v) <= 1.0) ||
             (std::abs(v) <= 0.34 && std::abs(u) <= 1.0);
    case 5:  // ring
      return r2 <= 1.0 && r2 >= 0.25;
    case 6:  // diamond
      return std::abs(u) + std::abs(v) <= 1.0;
    case 7:  // crescent
      return r2 <= 1.0 && (u - 0.45) * (u - 0.45) + v * v >= 0.64;
    default:
      throw ContractError("unknown shape family " + std::to_string(family));
  }
}

std::vector<unsigned char> raster_shape(int family, int size, double cx, double cy,
                                        double e, double theta) {
  std::vector<unsigned char> mask(static_cast<std::size_t>(size) * size, 0);
  const double reach = e * 1.45 + 1.0;
  const int x0 = std::max(0, static_cast<int>(cx - reach));
  const int x1 = std::min(size - 1, static_cast<int>(cx + reach));
  const int y0 = std::max(0, static_cast<int>(cy - reach));
  const int y1 = std::min(size - 1, static_cast<int>(cy + reach));
  const double ct = std::cos(theta), st = std::sin(theta);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double du = (x + 0.5 - cx) / e;
      const double dv = (y + 0.5 - cy) / e;
      const double u = du * ct + dv * st;
      const double v = -du * st + dv * ct;
      if (inside_family(family, u, v))
        mask[static_cast<std::size_t>(y) * size + x] = 1;
    }
  }
  return mask;
}

std::int64_t mask_area(const std::vector<unsigned char>& m) {
  std::int64_t n = 0;
  for (unsigned char v : m) n += v;
  return n;
}

std::int64_t mask_overlap(const std::vector<unsigned char>& a,
                          const std::vector<unsigned char>& b) {
  std::int64_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += a[i] & b[i];
  return n;
}

}  // namespace

RenderedSample render_sample(int family, int size, Rng& rng, int min_distractors,
                             int max_distractors, double occlusion_budget) {
  const int n_families = static_cast<int>(shape_families().size());
  if (family < 0 || family >= n_families) {
    throw ContractError("render_sample: bad family index");
  }

  // co-salient shape: placed first so distractor placement can respect the
  // occlusion budget against its mask
  std::vector<unsigned char> gt;
  double main_cx = 0, main_cy = 0;
  for (int attempt = 0; attempt < 8; ++attempt) {
    const double e = size * rng.uniform(0.15, 0.22);
    main_cx = rng.uniform(e + 2.0, size - e - 2.0);
    main_cy = rng.uniform(e + 2.0, size - e - 2.0);
    const double theta = rng.uniform(0.0, 2.0 * kPi);
    gt = raster_shape(family, size, main_cx, main_cy, e, theta);
    if (mask_area(gt) > 0) break;
    gt.clear();
  }
  if (gt.empty()) throw NumericError("render_sample: empty main mask");
  const std::int64_t gt_area = mask_area(gt);

  RenderedSample out;
  out.gt = gt;

  // distractors from other families, placement rejected past the budget
  std::vector<int> dist_families;
  const int span = max_distractors - min_distractors;
  const int n_dist =
      min_distractors + (span > 0 ? static_cast<int>(rng.uniform_int(span + 1)) : 0);
  std::int64_t overlap_used = 0;
  for (int d = 0; d < n_dist; ++d) {
    int fam = static_cast<int>(rng.uniform_int(n_families - 1));
    if (fam >= family) ++fam;
    for (int attempt = 0; attempt < 20; ++attempt) {
      const double e = size * rng.uniform(0.07, 0.11);
      const double cx = rng.uniform(e, size - e);
      const double cy = rng.uniform(e, size - e);
      const double theta = rng.uniform(0.0, 2.0 * kPi);
      auto mask = raster_shape(fam, size, cx, cy, e, theta);
      const std::int64_t ov = mask_overlap(mask, gt);
      if (mask_area(mask) > 0 &&
          overlap_used + ov <= static_cast<std::int64_t>(occlusion_budget * gt_area)) {
        overlap_used += ov;
        out.distractor_masks.push_back(std::move(mask));
        dist_families.push_back(fam);
        break;
      }
    }
  }

  // colors: dim gradient background, mid-tone distractors, bright main shape
  double bg0[3], bgx[3], bgy[3];
  for (int c = 0; c < 3; ++c) {
    bg0[c] = rng.uniform(0.08, 0.40);
    bgx[c] = rng.uniform(-0.22, 0.22);
    bgy[c] = rng.uniform(-0.22, 0.22);
  }
  std::vector<std::array<double, 3>> dist_colors(out.distractor_masks.size());
  for (auto& col : dist_colors)
    for (int c = 0; c < 3; ++c) col[static_cast<std::size_t>(c)] = rng.uniform(0.35, 0.8);
  double main_color[3];
  for (int attempt = 0; attempt < 5; ++attempt) {
    double contrast = 0.0;
    for (int c = 0; c < 3; ++c) {
      main_color[c] = rng.uniform(0.55, 0.95);
      contrast = std::max(contrast, std::abs(main_color[c] - bg0[c]));
    }
    if (contrast >= 0.3) break;
  }
  const double tex_kx = rng.uniform(1.0, 4.0);
  const double tex_ky = rng.uniform(1.0, 4.0);
  const double tex_phase = rng.uniform(0.0, 2.0 * kPi);

  ImageU8 img;
  img.width = size;
  img.height = size;
  img.channels = 3;
  img.pixels.resize(static_cast<std::size_t>(size) * size * 3);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const std::size_t pi = static_cast<std::size_t>(y) * size + x;
      const double noise = 0.03 * (rng.uniform() * 2.0 - 1.0);
      double px[3];
      for (int c = 0; c < 3; ++c)
        px[c] = bg0[c] + bgx[c] * (static_cast<double>(x) / size) +
                bgy[c] * (static_cast<double>(y) / size) + noise;
      for (std::size_t d = 0; d < out.distractor_masks.size(); ++d) {
        if (out.distractor_masks[d][pi]) {
          for (int c = 0; c < 3; ++c) px[c] = dist_colors[d][static_cast<std::size_t>(c)];
        }
      }
      if (gt[pi]) {
        const double tex =
            1.0 + 0.12 * std::sin(2.0 * kPi * (tex_kx * x + tex_ky * y) / size + tex_phase);
        for (int c = 0; c < 3; ++c) px[c] = main_color[c] * tex;
      }
      for (int c = 0; c < 3; ++c) {
        const double v = std::min(1.0, std::max(0.0, px[c]));
        img.pixels[pi * 3 + static_cast<std::size_t>(c)] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
  }
  out.image = std::move(img);
  return out;
}

void synth_generate(const SynthConfig& cfg, const std::string& out_dir) {
  if (cfg.size % 32 != 0) {
    throw ContractError("synth_generate: size must be divisible by 32");
  }
  if (cfg.images_per_group % 2 != 0) {
    throw ContractError("synth_generate: images per group must be even");
  }
  if (cfg.n_groups < 1 ||
      cfg.n_groups > static_cast<int>(shape_families().size())) {
    throw ContractError("synth_generate: 1.." +
                        std::to_string(shape_families().size()) + " groups supported");
  }
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "images", ec);
  fs::create_directories(fs::path(out_dir) / "gt", ec);
  if (ec) throw IoError("synth_generate: cannot create " + out_dir);

  std::ofstream manifest(fs::path(out_dir) / "manifest.tsv");
  if (!manifest) throw IoError("synth_generate: cannot write manifest in " + out_dir);
  manifest << "group\tstem\tseed\n";

  for (int g = 0; g < cfg.n_groups; ++g) {
    const std::string& family = shape_families()[static_cast<std::size_t>(g)];
    fs::create_directories(fs::path(out_dir) / "images" / family, ec);
    fs::create_directories(fs::path(out_dir) / "gt" / family, ec);
    if (ec) throw IoError("synth_generate: cannot create group dirs for " + family);
    for (int i = 0; i < cfg.images_per_group; ++i) {
      const std::uint64_t file_seed =
          derive_seed(cfg.seed, tag_hash("synth"),
                      static_cast<std::uint64_t>(g) * 100000ULL + static_cast<std::uint64_t>(i));
      Rng rng(file_seed);
      auto sample = render_sample(g, cfg.size, rng, cfg.min_distractors,
                                  cfg.max_distractors, cfg.occlusion_budget);
      char stem[16];
      std::snprintf(stem, sizeof(stem), "im%04d", i);
      write_png((fs::path(out_dir) / "images" / family / (std::string(stem) + ".png")).string(),
                sample.image);
      ImageU8 gt_img;
      gt_img.width = cfg.size;
      gt_img.height = cfg.size;
      gt_img.channels = 1;
      gt_img.pixels.resize(sample.gt.size());
      for (std::size_t p = 0; p < sample.gt.size(); ++p)
        gt_img.pixels[p] = sample.gt[p] ? 255 : 0;
      write_png((fs::path(out_dir) / "gt" / family / (std::string(stem) + ".png")).string(),
                gt_img);
      manifest << family << '\t' << stem << '\t' << file_seed << '\n';
    }
  }
}

namespace {

Tensor32 image_to_tensor(const ImageU8& img) {
  auto t = Tensor32::zeros({3, img.height, img.width});
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const unsigned char v =
            img.channels == 3 ? img.pixels[img.index(y, x, c)] : img.pixels[img.index(y, x)];
        t[(static_cast<std::int64_t>(c) * img.height + y) * img.width + x] =
            static_cast<float>(v) / 255.0f;
      }
  return t;
}

Tensor32 gt_to_tensor(const ImageU8& img) {
  auto t = Tensor32::zeros({1, img.height, img.width});
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      // first channel decides for RGB ground-truth files
      const unsigned char v = img.pixels[img.index(y, x)];
      t[static_cast<std::int64_t>(y) * img.width + x] = v >= 128 ? 1.0f : 0.0f;
    }
  return t;
}

Tensor32 resize_chw(const Tensor32& t, int h, int w) {
  auto four = reshape(t, {1, t.dim(0), t.dim(1), t.dim(2)});
  return reshape(bilinear_resize(four, h, w), {t.dim(0), h, w});
}

Tensor32 binarize(const Tensor32& t) {
  auto out = t.clone();
  for (std::int64_t i = 0; i < out.numel(); ++i)
    out[i] = out[i] >= 0.5f ? 1.0f : 0.0f;
  return out;
}

bool has_foreground(const Tensor32& gt) {
  for (std::int64_t i = 0; i < gt.numel(); ++i)
    if (gt[i] > 0.5f) return true;
  return false;
}

}  // namespace

std::vector<ImageGroup> load_dataset(const std::string& root,
                                     const std::string& gt_root, int resize_to) {
  if (!fs::is_directory(root)) throw IoError("load_dataset: no such directory " + root);
  std::vector<std::string> group_names;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) group_names.push_back(entry.path().filename().string());
  std::sort(group_names.begin(), group_names.end());
  if (group_names.empty()) throw IoError("load_dataset: no groups under " + root);

  const bool want_gt = !gt_root.empty();
  std::vector<ImageGroup> groups;
  for (const auto& name : group_names) {
    ImageGroup group;
    group.class_id = name;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(fs::path(root) / name)) {
      const auto ext = entry.path().extension().string();
      if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("load_dataset: empty group " + name);
    for (const auto& file : files) {
      const std::string stem = file.stem().string();
      auto img = image_to_tensor(read_image(file.string()));
      group.orig_sizes.emplace_back(img.dim(1), img.dim(2));
      Tensor32 gt;
      if (want_gt) {
        const auto gt_path = fs::path(gt_root) / name / (stem + ".png");
        if (!fs::exists(gt_path)) {
          throw IoError("load_dataset: missing ground truth for " + name + "/" + stem);
        }
        gt = gt_to_tensor(read_image(gt_path.string()));
        if (gt.dim(1) != img.dim(1) || gt.dim(2) != img.dim(2)) {
          gt = binarize(resize_chw(gt, img.dim(1), img.dim(2)));
        }
      }
      if (resize_to > 0 && (img.dim(1) != resize_to || img.dim(2) != resize_to)) {
        img = resize_chw(img, resize_to, resize_to);
        if (want_gt) gt = binarize(resize_chw(gt, resize_to, resize_to));
      }
      if (want_gt && !has_foreground(gt)) {
        throw IoError("load_dataset: empty ground truth for " + name + "/" + stem);
      }
      group.images.push_back(std::move(img));
      if (want_gt) group.gts.push_back(std::move(gt));
      group.stems.push_back(stem);
    }
    groups.push_back(std::move(group));
  }
  return groups;
}

std::pair<Tensor32, Tensor32> augment(const Tensor32& image, const Tensor32& gt,
                                      std::uint64_t seed, const AugmentConfig& cfg) {
  Rng rng(seed);
  Tensor32 img = image.clone();
  Tensor32 mask = gt.defined() ? gt.clone() : gt;
  const int h = img.dim(1), w = img.dim(2);

  if (rng.uniform() < cfg.p_flip) {
    auto flip = [&](Tensor32& t) {
      for (int c = 0; c < t.dim(0); ++c)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w / 2; ++x)
            std::swap(t[(static_cast<std::int64_t>(c) * h + y) * w + x],
                      t[(static_cast<std::int64_t>(c) * h + y) * w + (w - 1 - x)]);
    };
    flip(img);
    if (mask.defined()) flip(mask);
  }

  if (rng.uniform() < cfg.p_jitter) {
    const float b = static_cast<float>(rng.uniform(cfg.jitter_lo, cfg.jitter_hi));
    const float c = static_cast<float>(rng.uniform(cfg.jitter_lo, cfg.jitter_hi));
    const float s = static_cast<float>(rng.uniform(cfg.jitter_lo, cfg.jitter_hi));
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    for (std::int64_t i = 0; i < plane; ++i) {
      float r = img[i], g = img[plane + i], bl = img[2 * plane + i];
      r *= b;
      g *= b;
      bl *= b;
      r = (r - 0.5f) * c + 0.5f;
      g = (g - 0.5f) * c + 0.5f;
      bl = (bl - 0.5f) * c + 0.5f;
      const float luma = 0.299f * r + 0.587f * g + 0.114f * bl;
      r = luma + (r - luma) * s;
      g = luma + (g - luma) * s;
      bl = luma + (bl - luma) * s;
      img[i] = std::min(1.0f, std::max(0.0f, r));
      img[plane + i] = std::min(1.0f, std::max(0.0f, g));
      img[2 * plane + i] = std::min(1.0f, std::max(0.0f, bl));
    }
  }

  if (rng.uniform() < cfg.p_rotate) {
    const double theta = rng.uniform(-cfg.max_rotate_deg, cfg.max_rotate_deg) * kPi / 180.0;
    const double ct = std::cos(theta), st = std::sin(theta);
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    auto rotate = [&](const Tensor32& src) {
      auto dst = Tensor32::zeros(src.shape());
      for (int c = 0; c < src.dim(0); ++c) {
        const std::int64_t base = static_cast<std::int64_t>(c) * h * w;
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            // inverse map with border replication
            const double sx = std::min(static_cast<double>(w - 1),
                                       std::max(0.0, ct * (x - cx) + st * (y - cy) + cx));
            const double sy = std::min(static_cast<double>(h - 1),
                                       std::max(0.0, -st * (x - cx) + ct * (y - cy) + cy));
            const int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
            const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
            const double fx = sx - x0, fy = sy - y0;
            const double v =
                (1 - fy) * ((1 - fx) * src[base + static_cast<std::int64_t>(y0) * w + x0] +
                            fx * src[base + static_cast<std::int64_t>(y0) * w + x1]) +
                fy * ((1 - fx) * src[base + static_cast<std::int64_t>(y1) * w + x0] +
                      fx * src[base + static_cast<std::int64_t>(y1) * w + x1]);
            dst[base + static_cast<std::int64_t>(y) * w + x] = static_cast<float>(v);
          }
      }
      return dst;
    };
    img = rotate(img);
    if (mask.defined()) mask = binarize(rotate(mask));
  }

  return {img, mask};
}

GroupBatch make_batch(const std::vector<ImageGroup>& groups, int n, int cap,
                      std::uint64_t seed) {
  if (n < 1) throw ContractError("make_batch: need at least one group per batch");
  if (static_cast<int>(groups.size()) < n) {
    throw ContractError("make_batch: " + std::to_string(groups.size()) +
                        " classes available, " + std::to_string(n) + " requested");
  }
  for (const auto& g : groups) {
    if (g.images.empty()) throw ContractError("make_batch: empty group " + g.class_id);
  }
  Rng rng(seed);
  auto order = rng.permutation(static_cast<int>(groups.size()));

  int s = cap;
  for (int i = 0; i < n; ++i)
    s = std::min(s, static_cast<int>(groups[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])].images.size()));
  s -= s % 2;
  if (s < 2) {
    throw ContractError("make_batch: even group size collapses to " + std::to_string(s));
  }

  GroupBatch batch;
  batch.per_group = s;
  for (int i = 0; i < n; ++i) {
    const int gi = order[static_cast<std::size_t>(i)];
    const auto& group = groups[static_cast<std::size_t>(gi)];
    auto pick = rng.permutation(static_cast<int>(group.images.size()));
    GroupBatch::Slice slice;
    slice.group_index = gi;
    slice.class_id = group.class_id;
    slice.sample_indices.assign(pick.begin(), pick.begin() + s);
    std::sort(slice.sample_indices.begin(), slice.sample_indices.end());
    batch.slices.push_back(std::move(slice));
  }
  return batch;
}

}  // namespace mccl
