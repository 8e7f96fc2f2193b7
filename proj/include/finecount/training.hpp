#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "finecount/annotations.hpp"
#include "finecount/groundtruth.hpp"
#include "finecount/losses.hpp"
#include "finecount/metrics.hpp"
#include "finecount/network.hpp"

namespace finecount {

struct TrainConfig {
  double learning_rate = 1e-4;
  int steps = 1000;
  std::uint64_t seed = 0;
  KernelSpec kernel;
  double lambda = 0.2;
  double epsilon = kDefaultEpsilon;
  double eta = kDefaultEta;
  double alpha = kDefaultAlpha;
  double beta = kDefaultBeta;
  int iterations = 3;
  Propagation propagation = Propagation::hourglass;
  Attention attention = Attention::coatt;
  ModelKind model = ModelKind::ours;
  int crop = 64;
  int checkpoint_every = 0;  // 0 writes only the final checkpoint
  Widths widths;
  int hourglass_depth = 2;

  void validate() const;
  ArchConfig arch(int k, int in_channels) const;
  PropagationSettings propagation_settings() const { return {lambda, epsilon, {}}; }

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  /// Keys absent from `j` keep the values already in `base`.
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
};

/// Adam moments keyed by parameter name (decay 0.9 / 0.999, epsilon 1e-8).
struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  long step = 0;

  bool operator==(const AdamState&) const = default;
};

/// Applies one Adam update from the gradients stored in `params`.
void adam_update(ModelParams& params, AdamState& state, double learning_rate);

struct Checkpoint {
  ModelParams params;
  AdamState optimizer;
  int step = 0;
  TrainConfig config;
};

/// Checkpoint file: a JSON metadata line, then one map record per named
/// tensor (parameters, then Adam moments) stored as float64.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct LossRow {
  int step = 0;
  LossBreakdown loss;
};

/// CSV with header step,lc,ls,lf,total.
void write_loss_log(const std::filesystem::path& path, const std::vector<LossRow>& rows);

struct TrainOptions {
  std::filesystem::path output_dir;  // empty: nothing is written
  std::function<void(const LossRow&)> on_step;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossRow> log;
  std::vector<std::filesystem::path> artifacts;
};

/// Batch-size-1 training on random crops; Adam updates; aborts with a
/// NumericError naming the component when a loss turns non-finite.
TrainResult train(const DatasetManifest& manifest, const TrainConfig& config, const TrainOptions& options = {});

/// Loss of the model on one (image, full-resolution densities) pair.
LossBreakdown evaluate_loss(const ModelParams& params, const TrainConfig& config, const Tensor& image,
                            const Tensor& densities);

/// Raw network predictions for one image; counts are plain map sums.
struct Prediction {
  Tensor density;        // 1 x h x w
  Tensor segmentation;   // (K+1) x h x w (derived from the fine maps for direct-count baselines)
  Tensor fine_grained;   // K x h x w
};

Prediction predict(const ModelParams& params, const TrainConfig& config, const Tensor& image);

/// Full-image forward per sample, metrics at the output stride.
EvalReport evaluate(const Checkpoint& ckpt, const DatasetManifest& manifest);

}  // namespace finecount
