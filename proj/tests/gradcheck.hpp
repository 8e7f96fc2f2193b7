#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "finecount/losses.hpp"
#include "finecount/network.hpp"

namespace fc_test {

struct GradCheckEntry {
  std::string name;
  std::size_t index;
  double analytic;
  double numeric;
  double rel_error;
};

struct GradCheckResult {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0;
  double loss = 0;
};

inline double model_loss(const finecount::ModelParams& params, const finecount::Tensor& image,
                         const finecount::GroundTruth& gt, const finecount::PropagationSettings& settings) {
  finecount::ad::Graph g;
  finecount::ParamBinder b(g, params);
  auto fwd = finecount::forward(b, image, settings);
  return finecount::build_loss(fwd, gt).total.value()[0];
}

/// Compares backprop gradients of the total loss against central
/// differences on `n` parameter entries drawn uniformly from all entries.
/// Relative error is |a - n| / max(|a|, |n|), or 0 when both are zero.
inline GradCheckResult model_gradient_check(finecount::ModelParams params, const finecount::Tensor& image,
                                            const finecount::GroundTruth& gt,
                                            const finecount::PropagationSettings& settings, std::size_t n,
                                            std::uint64_t seed, double h = 1e-5) {
  GradCheckResult r;
  params.zero_grad();
  {
    finecount::ad::Graph g;
    finecount::ParamBinder b(g, params, true);
    auto fwd = finecount::forward(b, image, settings);
    auto loss = finecount::build_loss(fwd, gt);
    r.loss = loss.total.value()[0];
    g.backward(loss.total);
  }
  std::vector<std::pair<std::string, std::size_t>> all;
  for (const auto& [name, p] : params.tensors())
    for (std::size_t i = 0; i < p.value.size(); ++i) all.emplace_back(name, i);
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min(n, all.size()));
  for (const auto& [name, i] : all) {
    auto& p = params.at(name);
    double analytic = p.grad.empty() ? 0.0 : p.grad[i];
    double orig = p.value[i];
    p.value[i] = orig + h;
    double up = model_loss(params, image, gt, settings);
    p.value[i] = orig - h;
    double down = model_loss(params, image, gt, settings);
    p.value[i] = orig;
    double numeric = (up - down) / (2 * h);
    double denom = std::max(std::abs(analytic), std::abs(numeric));
    double rel = denom == 0 ? 0.0 : std::abs(analytic - numeric) / denom;
    r.entries.push_back({name, i, analytic, numeric, rel});
    r.max_rel_error = std::max(r.max_rel_error, rel);
  }
  return r;
}

}  // namespace fc_test
