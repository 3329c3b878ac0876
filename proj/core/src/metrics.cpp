#include "mccl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include "mccl/error.hpp"
#include "mccl/image_io.hpp"
#include "mccl/ops.hpp"

namespace fs = std::filesystem;

namespace mccl {

namespace {

constexpr double kEps = 1e-12;
constexpr int kThresholds = 256;

void check_pair(const Tensor32& pred, const Tensor32& gt) {
  if (pred.rank() != 2 || gt.rank() != 2 || pred.shape() != gt.shape()) {
    throw ShapeError("metric: prediction " + shape_str(pred.shape()) +
                     " vs ground truth " + shape_str(gt.shape()));
  }
}

std::int64_t foreground_area(const Tensor32& gt) {
  std::int64_t n = 0;
  for (std::int64_t i = 0; i < gt.numel(); ++i) n += gt[i] > 0.5f ? 1 : 0;
  return n;
}

// largest threshold index i in [0,255] with p >= i/255.0, so that cumulative
// histograms reproduce per-threshold binarization exactly
int threshold_index(float p) {
  int i = static_cast<int>(static_cast<double>(p) * 255.0);
  i = std::min(std::max(i, 0), 255);
  while (i < 255 && static_cast<double>(p) >= (i + 1) / 255.0) ++i;
  while (i > 0 && static_cast<double>(p) < i / 255.0) --i;
  return i;
}

struct ThresholdCounts {
  // per threshold t: predicted-positive count and true-positive count
  std::array<std::int64_t, kThresholds> npos{};
  std::array<std::int64_t, kThresholds> tp{};
};

ThresholdCounts count_thresholds(const Tensor32& pred, const Tensor32& gt) {
  std::array<std::int64_t, kThresholds> hist_all{};
  std::array<std::int64_t, kThresholds> hist_tp{};
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    const int idx = threshold_index(pred[i]);
    ++hist_all[static_cast<std::size_t>(idx)];
    if (gt[i] > 0.5f) ++hist_tp[static_cast<std::size_t>(idx)];
  }
  ThresholdCounts counts;
  std::int64_t acc_all = 0, acc_tp = 0;
  for (int t = kThresholds - 1; t >= 0; --t) {
    acc_all += hist_all[static_cast<std::size_t>(t)];
    acc_tp += hist_tp[static_cast<std::size_t>(t)];
    counts.npos[static_cast<std::size_t>(t)] = acc_all;
    counts.tp[static_cast<std::size_t>(t)] = acc_tp;
  }
  return counts;
}

}  // namespace

double mae(const Tensor32& pred, const Tensor32& gt) {
  check_pair(pred, gt);
  double acc = 0.0;
  for (std::int64_t i = 0; i < pred.numel(); ++i)
    acc += std::abs(static_cast<double>(pred[i]) - gt[i]);
  return acc / static_cast<double>(pred.numel());
}

double f_measure_max(const Tensor32& pred, const Tensor32& gt) {
  check_pair(pred, gt);
  const std::int64_t fg = foreground_area(gt);
  if (fg == 0) throw ContractError("f_measure_max: empty ground truth");
  const auto counts = count_thresholds(pred, gt);
  constexpr double beta2 = 0.3;
  double best = 0.0;
  for (int t = 0; t < kThresholds; ++t) {
    const std::int64_t npos = counts.npos[static_cast<std::size_t>(t)];
    const std::int64_t tp = counts.tp[static_cast<std::size_t>(t)];
    const double precision = npos == 0 ? 1.0 : static_cast<double>(tp) / npos;
    const double recall = static_cast<double>(tp) / fg;
    double f = 0.0;
    if (precision > 0.0 || recall > 0.0) {
      f = (1.0 + beta2) * precision * recall / (beta2 * precision + recall);
    }
    best = std::max(best, f);
  }
  return best;
}

double e_measure_max(const Tensor32& pred, const Tensor32& gt) {
  check_pair(pred, gt);
  const std::int64_t n = pred.numel();
  const std::int64_t fg = foreground_area(gt);
  const auto counts = count_thresholds(pred, gt);
  double best = 0.0;
  for (int t = 0; t < kThresholds; ++t) {
    const std::int64_t npos = counts.npos[static_cast<std::size_t>(t)];
    const double mean_b = static_cast<double>(npos) / n;
    double score;
    if (fg == 0) {
      score = 1.0 - mean_b;
    } else if (fg == n) {
      score = mean_b;
    } else {
      const std::int64_t tp = counts.tp[static_cast<std::size_t>(t)];
      const std::int64_t counts4[4][2] = {
          {tp, 1},                 // gt fg, pred pos
          {fg - tp, 0},            // gt fg, pred neg -> handled via flag below
          {npos - tp, 1},          // gt bg, pred pos
          {n - fg - (npos - tp), 0}};
      const double mean_g = static_cast<double>(fg) / n;
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) {
        const double phi_g = (k < 2 ? 1.0 : 0.0) - mean_g;
        const double phi_b = (counts4[k][1] ? 1.0 : 0.0) - mean_b;
        const double align =
            2.0 * phi_g * phi_b / (phi_g * phi_g + phi_b * phi_b + kEps);
        const double enhanced = (align + 1.0) * (align + 1.0) / 4.0;
        acc += enhanced * static_cast<double>(counts4[k][0]);
      }
      score = acc / static_cast<double>(n);
    }
    best = std::max(best, score);
  }
  return best;
}

namespace {

struct BlockStats {
  std::int64_t n = 0;
  double mean_x = 0, mean_y = 0, var_x = 0, var_y = 0, cov = 0;
};

BlockStats block_stats(const Tensor32& pred, const Tensor32& gt, int y0, int y1,
                       int x0, int x1) {
  BlockStats s;
  s.n = static_cast<std::int64_t>(y1 - y0) * (x1 - x0);
  if (s.n <= 0) return s;
  double sx = 0, sy = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      sx += pred.at(y, x);
      sy += gt.at(y, x);
    }
  s.mean_x = sx / static_cast<double>(s.n);
  s.mean_y = sy / static_cast<double>(s.n);
  if (s.n > 1) {
    double vx = 0, vy = 0, cv = 0;
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        const double dx = pred.at(y, x) - s.mean_x;
        const double dy = gt.at(y, x) - s.mean_y;
        vx += dx * dx;
        vy += dy * dy;
        cv += dx * dy;
      }
    s.var_x = vx / static_cast<double>(s.n - 1);
    s.var_y = vy / static_cast<double>(s.n - 1);
    s.cov = cv / static_cast<double>(s.n - 1);
  }
  return s;
}

double block_ssim(const BlockStats& s) {
  if (s.n <= 0) return 0.0;
  const double alpha = 4.0 * s.mean_x * s.mean_y * s.cov;
  const double beta =
      (s.mean_x * s.mean_x + s.mean_y * s.mean_y) * (s.var_x + s.var_y);
  if (alpha != 0.0) return alpha / (beta + kEps);
  return beta == 0.0 ? 1.0 : 0.0;
}

double object_score(double mean, double stddev) {
  return 2.0 * mean / (mean * mean + 1.0 + stddev + kEps);
}

}  // namespace

double s_measure(const Tensor32& pred, const Tensor32& gt) {
  check_pair(pred, gt);
  const int h = pred.dim(0), w = pred.dim(1);
  const std::int64_t n = pred.numel();
  const std::int64_t fg = foreground_area(gt);
  if (fg == 0) {
    double m = 0.0;
    for (std::int64_t i = 0; i < n; ++i) m += pred[i];
    return std::min(1.0, std::max(0.0, 1.0 - m / static_cast<double>(n)));
  }
  if (fg == n) {
    double m = 0.0;
    for (std::int64_t i = 0; i < n; ++i) m += pred[i];
    return std::min(1.0, std::max(0.0, m / static_cast<double>(n)));
  }

  // object term: foreground similarity on pred within gt, background
  // similarity on (1 - pred) outside gt, mixed by the foreground ratio
  double sum_fg = 0, sum_bg = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (gt[i] > 0.5f)
      sum_fg += pred[i];
    else
      sum_bg += 1.0 - pred[i];
  }
  const double mean_fg = sum_fg / static_cast<double>(fg);
  const double mean_bg = sum_bg / static_cast<double>(n - fg);
  double var_fg = 0, var_bg = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (gt[i] > 0.5f) {
      const double d = pred[i] - mean_fg;
      var_fg += d * d;
    } else {
      const double d = (1.0 - pred[i]) - mean_bg;
      var_bg += d * d;
    }
  }
  const double std_fg = fg > 1 ? std::sqrt(var_fg / static_cast<double>(fg - 1)) : 0.0;
  const double std_bg =
      n - fg > 1 ? std::sqrt(var_bg / static_cast<double>(n - fg - 1)) : 0.0;
  const double mu = static_cast<double>(fg) / static_cast<double>(n);
  const double s_object =
      mu * object_score(mean_fg, std_fg) + (1.0 - mu) * object_score(mean_bg, std_bg);

  // region term: 4 blocks split at the foreground centroid, area-weighted ssim
  double cy_acc = 0, cx_acc = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (gt.at(y, x) > 0.5f) {
        cy_acc += y;
        cx_acc += x;
      }
  const int cy = static_cast<int>(std::lround(cy_acc / static_cast<double>(fg)));
  const int cx = static_cast<int>(std::lround(cx_acc / static_cast<double>(fg)));
  const int ysplit = cy + 1, xsplit = cx + 1;  // top-left block is inclusive
  double s_region = 0.0;
  const int bounds[4][4] = {{0, ysplit, 0, xsplit},
                            {0, ysplit, xsplit, w},
                            {ysplit, h, 0, xsplit},
                            {ysplit, h, xsplit, w}};
  for (const auto& b : bounds) {
    const auto stats = block_stats(pred, gt, b[0], b[1], b[2], b[3]);
    const double weight = static_cast<double>(stats.n) / static_cast<double>(n);
    s_region += weight * block_ssim(stats);
  }

  const double s = 0.5 * s_object + 0.5 * s_region;
  return std::min(1.0, std::max(0.0, s));
}

namespace {

Tensor32 read_map(const std::string& path, bool binarize) {
  const auto img = read_image(path);
  auto t = Tensor32::zeros({img.height, img.width});
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double v;
      if (img.channels == 1) {
        v = img.pixels[img.index(y, x)] / 255.0;
      } else {
        v = (0.299 * img.pixels[img.index(y, x, 0)] +
             0.587 * img.pixels[img.index(y, x, 1)] +
             0.114 * img.pixels[img.index(y, x, 2)]) /
            255.0;
      }
      if (binarize) v = v >= 0.5 ? 1.0 : 0.0;
      t.at(y, x) = static_cast<float>(v);
    }
  return t;
}

Tensor32 resize_map(const Tensor32& t, int h, int w) {
  auto four = reshape(t, {1, 1, t.dim(0), t.dim(1)});
  return reshape(bilinear_resize(four, h, w), {h, w});
}

}  // namespace

MetricsReport evaluate_dataset(const std::string& pred_root, const std::string& gt_root) {
  if (!fs::is_directory(gt_root)) {
    throw IoError("evaluate: no such ground-truth directory " + gt_root);
  }
  std::vector<std::string> groups;
  for (const auto& entry : fs::directory_iterator(gt_root))
    if (entry.is_directory()) groups.push_back(entry.path().filename().string());
  std::sort(groups.begin(), groups.end());

  std::vector<std::string> missing;
  MetricsReport report;
  for (const auto& group : groups) {
    std::vector<fs::path> gt_files;
    for (const auto& entry : fs::directory_iterator(fs::path(gt_root) / group))
      if (entry.path().extension() == ".png") gt_files.push_back(entry.path());
    std::sort(gt_files.begin(), gt_files.end());
    std::array<double, 4> gacc{0, 0, 0, 0};
    int gcount = 0;
    for (const auto& gt_file : gt_files) {
      const std::string stem = gt_file.stem().string();
      const auto pred_file = fs::path(pred_root) / group / (stem + ".png");
      if (!fs::exists(pred_file)) {
        missing.push_back(group + "/" + stem);
        continue;
      }
      auto gt = read_map(gt_file.string(), true);
      auto pred = read_map(pred_file.string(), false);
      if (pred.shape() != gt.shape()) pred = resize_map(pred, gt.dim(0), gt.dim(1));
      const double s = s_measure(pred, gt);
      const double f = f_measure_max(pred, gt);
      const double e = e_measure_max(pred, gt);
      const double m = mae(pred, gt);
      gacc[0] += s;
      gacc[1] += f;
      gacc[2] += e;
      gacc[3] += m;
      ++gcount;
      report.s_measure += s;
      report.f_max += f;
      report.e_max += e;
      report.mae += m;
      ++report.n_images;
    }
    if (gcount > 0) {
      for (auto& v : gacc) v /= gcount;
      report.per_group[group] = gacc;
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw IoError("evaluate: missing predictions for " + list);
  }
  if (report.n_images == 0) throw IoError("evaluate: no images under " + gt_root);
  report.s_measure /= report.n_images;
  report.f_max /= report.n_images;
  report.e_max /= report.n_images;
  report.mae /= report.n_images;
  return report;
}

void write_report_tsv(const MetricsReport& report, const std::string& dataset,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report " + path);
  out << "dataset\tgroup\tS\tFmax\tEmax\tMAE\n";
  out << std::fixed << std::setprecision(6);
  for (const auto& [group, v] : report.per_group) {
    out << dataset << '\t' << group << '\t' << v[0] << '\t' << v[1] << '\t' << v[2]
        << '\t' << v[3] << '\n';
  }
  out << dataset << "\tall\t" << report.s_measure << '\t' << report.f_max << '\t'
      << report.e_max << '\t' << report.mae << '\n';
}

std::string format_report_table(const MetricsReport& report, const std::string& dataset) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << "Dataset          Emax^   Salpha^ Fmax^   MAE_\n";
  auto row = [&os](const std::string& name, double e, double s, double f, double m) {
    os << name;
    for (std::size_t i = name.size(); i < 17; ++i) os << ' ';
    os << e << "   " << s << "   " << f << "   " << m << '\n';
  };
  for (const auto& [group, v] : report.per_group) row(group, v[2], v[0], v[1], v[3]);
  row(dataset + " (all)", report.e_max, report.s_measure, report.f_max, report.mae);
  return os.str();
}

}  // namespace mccl
