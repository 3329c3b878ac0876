#pragma once

#include <array>
#include <map>
#include <string>

#include "mccl/tensor.hpp"

namespace mccl {

// Per-dataset evaluation record; order of the array follows the report
// columns S, Fmax, Emax, MAE.
struct MetricsReport {
  double s_measure = 0.0;
  double f_max = 0.0;
  double e_max = 0.0;
  double mae = 0.0;
  int n_images = 0;
  std::map<std::string, std::array<double, 4>> per_group;
};

// All metrics take a prediction in [0,1] and a binary ground truth of the
// same size, both rank-2 [h,w].

double mae(const Tensor32& pred, const Tensor32& gt);

// max over 256 thresholds of F_beta with beta^2 = 0.3; P := 1 when nothing is
// predicted positive, F := 0 when P = R = 0. Ground truth must be nonempty.
double f_measure_max(const Tensor32& pred, const Tensor32& gt);

// max over 256 thresholds of the enhanced alignment score; degenerate
// conventions: all-zero gt -> 1 - mean(B), all-one gt -> mean(B).
double e_measure_max(const Tensor32& pred, const Tensor32& gt);

// 0.5 * object term + 0.5 * region term (4 blocks at the gt centroid);
// degenerate conventions: all-zero gt -> 1 - mean(pred), all-one -> mean(pred).
double s_measure(const Tensor32& pred, const Tensor32& gt);

// Walks gt_root/<group>/<stem>.png, loads matching predictions, averages the
// per-image metrics over all images and per group.
MetricsReport evaluate_dataset(const std::string& pred_root, const std::string& gt_root);

// TSV columns: dataset, group, S, Fmax, Emax, MAE; one row per group plus an
// "all" row.
void write_report_tsv(const MetricsReport& report, const std::string& dataset,
                      const std::string& path);

// console table in benchmark column order (Emax, S, Fmax, MAE)
std::string format_report_table(const MetricsReport& report, const std::string& dataset);

}  // namespace mccl
