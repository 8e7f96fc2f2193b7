#pragma once

#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "finecount/tensor.hpp"

namespace finecount {

struct EvalReport {
  std::vector<double> mae_per_category;
  double cmae = 0;
  double omae = 0;
  double seg_accuracy = 0;  // NaN when no non-background GT pixel was evaluated
  std::vector<double> seg_recall_per_category;
  std::size_t n_images = 0;
  std::size_t warnings = 0;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  /// Fixed-order table: category MAEs, CMAE, OMAE, accuracy, recalls.
  std::string table(std::span<const std::string> category_names = {}) const;
};

/// preds and gts hold one K-channel map per image; resolutions may differ
/// because only spatial sums are compared.
std::vector<double> mae_per_category(std::span<const Tensor> preds, std::span<const Tensor> gts);
double cmae(std::span<const double> mae);
/// pred_overall holds one map per image (any channel count, summed).
double omae(std::span<const Tensor> pred_overall, std::span<const Tensor> gts);

struct SegmentationScores {
  double accuracy = 0;
  std::vector<double> recall;
  std::size_t evaluated_pixels = 0;
  std::size_t warnings = 0;
};

/// Scores argmax over category channels 1..K at pixels whose GT background
/// channel is 0. Ties go to the lowest category index.
SegmentationScores segmentation_metrics(std::span<const Tensor> pred_seg, std::span<const Tensor> gt_seg);

}  // namespace finecount
