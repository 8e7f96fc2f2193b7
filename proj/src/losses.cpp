#include "finecount/losses.hpp"

#include <algorithm>
#include <cmath>

#include "finecount/errors.hpp"

namespace finecount {

nlohmann::json LossBreakdown::to_json() const {
  return {{"counting", counting},
          {"segmentation", segmentation},
          {"fine_grained", fine_grained},
          {"total", total},
          {"alpha", alpha},
          {"beta", beta}};
}

namespace {

double sq_error(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) throw DataError(std::string(what) + ": prediction and target are misaligned");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double sce(const Tensor& pred, const Tensor& target, double floor) {
  if (!pred.same_shape(target)) throw DataError("segmentation_loss: prediction and target are misaligned");
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (target[i] != 0) s -= target[i] * std::log(std::max(pred[i], floor));
  return s;
}

}  // namespace

Tensor total_density(const Tensor& densities) {
  Tensor out(1, densities.height(), densities.width());
  for (int c = 0; c < densities.channels(); ++c)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += densities.channel(c)[i];
  return out;
}

double counting_loss(const Tensor& first_density, const Tensor& refined_density, const Tensor& gt_density) {
  Tensor y = total_density(gt_density);
  return sq_error(refined_density, y, "counting_loss") + sq_error(first_density, y, "counting_loss");
}

double segmentation_loss(const Tensor& first_seg, const Tensor& refined_seg, const Tensor& gt_seg, double floor) {
  return sce(first_seg, gt_seg, floor) + sce(refined_seg, gt_seg, floor);
}

double fine_grained_loss(const Tensor& fine_grained, const Tensor& gt_density) {
  return sq_error(fine_grained, gt_density, "fine_grained_loss");
}

LossBreakdown total_loss(double counting, double segmentation, double fine_grained, double alpha, double beta) {
  LossBreakdown b;
  b.counting = counting;
  b.segmentation = segmentation;
  b.fine_grained = fine_grained;
  b.alpha = alpha;
  b.beta = beta;
  b.total = counting + alpha * segmentation + beta * fine_grained;
  return b;
}

LossVars build_loss(const ForwardVars& fwd, const GroundTruth& gt, double alpha, double beta) {
  Tensor y_tot = total_density(gt.density);
  std::vector<std::pair<ad::Var, double>> terms;
  double lc = 0, ls = 0;
  if (fwd.has_segmentation) {
    std::vector<ad::Var> count_terms{ad::squared_error(fwd.first_density, y_tot)};
    std::vector<ad::Var> seg_terms{ad::soft_cross_entropy(fwd.first_seg, gt.segmentation, kLogFloor)};
    if (fwd.has_refinement) {
      count_terms.insert(count_terms.begin(), ad::squared_error(fwd.refined_density, y_tot));
      seg_terms.push_back(ad::soft_cross_entropy(fwd.refined_seg, gt.segmentation, kLogFloor));
    }
    for (auto v : count_terms) {
      lc += v.value()[0];
      terms.emplace_back(v, 1.0);
    }
    for (auto v : seg_terms) {
      ls += v.value()[0];
      terms.emplace_back(v, alpha);
    }
  }
  ad::Var lf = ad::squared_error(fwd.fine_grained, gt.density);
  terms.emplace_back(lf, beta);
  LossVars out;
  out.breakdown = total_loss(lc, ls, lf.value()[0], alpha, beta);
  out.total = ad::weighted_sum(terms);
  return out;
}

}  // namespace finecount
