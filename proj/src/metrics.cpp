#include "finecount/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "finecount/errors.hpp"

namespace finecount {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

nlohmann::json number_or_null(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }
double number_from(const nlohmann::json& j) { return j.is_null() ? kNaN : j.get<double>(); }

int argmax_category(const Tensor& seg, int k, std::size_t i) {
  int best = 0;
  for (int j = 1; j < k; ++j)
    if (seg.channel(j)[i] > seg.channel(best)[i]) best = j;
  return best;
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  nlohmann::json recalls = nlohmann::json::array();
  for (double r : seg_recall_per_category) recalls.push_back(number_or_null(r));
  return {{"mae_per_category", mae_per_category},
          {"cmae", cmae},
          {"omae", omae},
          {"seg_accuracy", number_or_null(seg_accuracy)},
          {"seg_recall_per_category", recalls},
          {"n_images", n_images},
          {"warnings", warnings}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  r.mae_per_category = j.at("mae_per_category").get<std::vector<double>>();
  r.cmae = j.at("cmae").get<double>();
  r.omae = j.at("omae").get<double>();
  r.seg_accuracy = number_from(j.at("seg_accuracy"));
  for (const auto& v : j.at("seg_recall_per_category")) r.seg_recall_per_category.push_back(number_from(v));
  r.n_images = j.at("n_images").get<std::size_t>();
  r.warnings = j.value("warnings", std::size_t{0});
  return r;
}

std::string EvalReport::table(std::span<const std::string> category_names) const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  auto name = [&](std::size_t j) {
    return j < category_names.size() ? category_names[j] : "category " + std::to_string(j + 1);
  };
  for (std::size_t j = 0; j < mae_per_category.size(); ++j)
    os << std::left << std::setw(24) << ("MAE " + name(j)) << mae_per_category[j] << '\n';
  os << std::setw(24) << "CMAE" << cmae << '\n';
  os << std::setw(24) << "OMAE" << omae << '\n';
  os << std::setw(24) << "Accuracy" << seg_accuracy << '\n';
  for (std::size_t j = 0; j < seg_recall_per_category.size(); ++j)
    os << std::setw(24) << ("Recall " + name(j)) << seg_recall_per_category[j] << '\n';
  os << std::setw(24) << "Images" << n_images << '\n';
  return os.str();
}

std::vector<double> mae_per_category(std::span<const Tensor> preds, std::span<const Tensor> gts) {
  if (preds.size() != gts.size()) throw DataError("mae_per_category: prediction and ground-truth counts differ");
  if (preds.empty()) throw DataError("mae_per_category: no images");
  int k = gts[0].channels();
  std::vector<double> mae(k, 0.0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].channels() != k || gts[i].channels() != k)
      throw DataError("mae_per_category: category count mismatch in image " + std::to_string(i));
    for (int j = 0; j < k; ++j) mae[j] += std::abs(gts[i].channel_sum(j) - preds[i].channel_sum(j));
  }
  for (auto& m : mae) m /= static_cast<double>(preds.size());
  return mae;
}

double cmae(std::span<const double> mae) {
  if (mae.empty()) throw DataError("cmae: no categories");
  double s = 0;
  for (double m : mae) s += m;
  return s / static_cast<double>(mae.size());
}

double omae(std::span<const Tensor> pred_overall, std::span<const Tensor> gts) {
  if (pred_overall.size() != gts.size()) throw DataError("omae: prediction and ground-truth counts differ");
  if (gts.empty()) throw DataError("omae: no images");
  double s = 0;
  for (std::size_t i = 0; i < gts.size(); ++i) s += std::abs(gts[i].sum() - pred_overall[i].sum());
  return s / static_cast<double>(gts.size());
}

SegmentationScores segmentation_metrics(std::span<const Tensor> pred_seg, std::span<const Tensor> gt_seg) {
  if (pred_seg.size() != gt_seg.size()) throw DataError("segmentation_metrics: image counts differ");
  if (gt_seg.empty()) throw DataError("segmentation_metrics: no images");
  int k = gt_seg[0].channels() - 1;
  std::vector<std::size_t> per_cat(k, 0), per_cat_correct(k, 0);
  std::size_t evaluated = 0, correct = 0;
  for (std::size_t n = 0; n < gt_seg.size(); ++n) {
    const Tensor& gt = gt_seg[n];
    const Tensor& pr = pred_seg[n];
    if (!gt.same_shape(pr) || gt.channels() != k + 1)
      throw DataError("segmentation_metrics: prediction and ground truth misaligned in image " + std::to_string(n));
    for (std::size_t i = 0; i < gt.plane(); ++i) {
      if (gt.channel(k)[i] != 0) continue;
      int g = argmax_category(gt, k, i);
      int p = argmax_category(pr, k, i);
      ++evaluated;
      ++per_cat[g];
      if (g == p) {
        ++correct;
        ++per_cat_correct[g];
      }
    }
  }
  SegmentationScores s;
  s.evaluated_pixels = evaluated;
  if (evaluated == 0) {
    s.accuracy = kNaN;
    ++s.warnings;
  } else {
    s.accuracy = static_cast<double>(correct) / evaluated;
  }
  for (int j = 0; j < k; ++j) {
    if (per_cat[j] == 0) {
      s.recall.push_back(kNaN);
      ++s.warnings;
    } else {
      s.recall.push_back(static_cast<double>(per_cat_correct[j]) / per_cat[j]);
    }
  }
  return s;
}

}  // namespace finecount
