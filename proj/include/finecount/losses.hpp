#pragma once

#include <nlohmann/json.hpp>

#include "finecount/autograd.hpp"
#include "finecount/groundtruth.hpp"
#include "finecount/network.hpp"
#include "finecount/tensor.hpp"

namespace finecount {

inline constexpr double kLogFloor = 1e-12;
inline constexpr double kDefaultAlpha = 100.0;
inline constexpr double kDefaultBeta = 10.0;

struct LossBreakdown {
  double counting = 0;
  double segmentation = 0;
  double fine_grained = 0;
  double total = 0;
  double alpha = kDefaultAlpha;
  double beta = kDefaultBeta;

  nlohmann::json to_json() const;
};

// All losses are sums over pixels (and channels), not means.

/// ||refined - Y_tot||^2 + ||first - Y_tot||^2 where Y_tot sums the K
/// ground-truth channels of `gt_density` (K x h x w).
double counting_loss(const Tensor& first_density, const Tensor& refined_density, const Tensor& gt_density);
/// Soft cross entropy of both stages against (K+1)-channel soft targets.
double segmentation_loss(const Tensor& first_seg, const Tensor& refined_seg, const Tensor& gt_seg,
                         double floor = kLogFloor);
/// sum_j ||fine_j - Y_j||^2.
double fine_grained_loss(const Tensor& fine_grained, const Tensor& gt_density);

LossBreakdown total_loss(double counting, double segmentation, double fine_grained, double alpha = kDefaultAlpha,
                         double beta = kDefaultBeta);

/// Sums the K channels into one.
Tensor total_density(const Tensor& densities);

/// Differentiable loss on a recorded forward pass. Models without a
/// refinement stage contribute one term each to l_c and l_s; direct-count
/// baselines (no segmentation branch) only train on l_f.
struct LossVars {
  ad::Var total;
  LossBreakdown breakdown;
};

LossVars build_loss(const ForwardVars& fwd, const GroundTruth& gt, double alpha = kDefaultAlpha,
                    double beta = kDefaultBeta);

}  // namespace finecount
