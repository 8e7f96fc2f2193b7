#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "finecount/autograd.hpp"
#include "finecount/tensor.hpp"

namespace finecount {

enum class Propagation { none, hourglass, gcn };
enum class Attention { none, coatt, naive };
enum class ModelKind { ours, onenet, twonets, segment };

std::string to_string(Propagation p);
std::string to_string(Attention a);
std::string to_string(ModelKind m);
Propagation propagation_from_string(const std::string& s);
Attention attention_from_string(const std::string& s);
ModelKind model_from_string(const std::string& s);

/// Output channel counts of the FCN-7 stack: layers 1-2, 3-4, 5, and the
/// branch layer 6 (also the refinement width).
struct Widths {
  int early = 16;
  int middle = 32;
  int deep = 64;
  int branch = 32;

  Widths halved() const { return {early / 2, middle / 2, deep / 2, branch / 2}; }
  bool operator==(const Widths&) const = default;
};

struct ArchConfig {
  int k = 2;
  int in_channels = 1;
  Widths widths;
  ModelKind model = ModelKind::ours;
  Propagation propagation = Propagation::hourglass;
  Attention attention = Attention::coatt;
  int iterations = 3;
  int hourglass_depth = 2;
  int gcn_radius = 3;

  static constexpr double kLeakySlope = 0.1;
  static constexpr int kOutputStride = 4;

  void validate() const;
  nlohmann::json to_json() const;
  static ArchConfig from_json(const nlohmann::json& j);
  bool operator==(const ArchConfig&) const = default;
};

/// Named learnable tensors of one model. Convolution weights are stored as
/// Cout x Cin x (k*k) and biases as Cout x 1 x 1 under "<layer>.weight" and
/// "<layer>.bias"; names iterate in sorted order.
class ModelParams {
 public:
  ModelParams() = default;
  ModelParams(ArchConfig arch, std::uint64_t seed) : arch_(arch), seed_(seed) {}

  const ArchConfig& arch() const { return arch_; }
  std::uint64_t seed() const { return seed_; }

  /// He-initialized kernel (std sqrt(2 / fan_in)) drawn from a stream keyed
  /// by (seed, layer name); zero bias.
  void add_conv(const std::string& layer, int in_channels, int out_channels, int kernel);

  ad::Parameter& at(const std::string& name);
  const ad::Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  std::map<std::string, ad::Parameter>& tensors() { return tensors_; }
  const std::map<std::string, ad::Parameter>& tensors() const { return tensors_; }

  std::size_t parameter_count() const;
  void zero_grad();

  bool operator==(const ModelParams& o) const;

 private:
  ArchConfig arch_;
  std::uint64_t seed_ = 0;
  std::map<std::string, ad::Parameter> tensors_;
};

/// Builds the parameters for any architecture/model combination.
ModelParams build_model(const ArchConfig& arch, std::uint64_t seed);
/// Full two-branch model with the default architecture for K categories.
ModelParams build_backbone(int k, std::uint64_t seed);
ModelParams build_baseline(ModelKind kind, int k, std::uint64_t seed);

/// Binds parameters into a graph, either as trainable leaves (gradients flow
/// back into the ModelParams) or as constants.
class ParamBinder {
 public:
  ParamBinder(ad::Graph& g, const ModelParams& params) : g_(g), params_(params) {}
  ParamBinder(ad::Graph& g, ModelParams& params, bool trainable)
      : g_(g), params_(params), mutable_(trainable ? &params : nullptr) {}

  ad::Graph& graph() const { return g_; }
  const ArchConfig& arch() const { return params_.arch(); }
  ad::Var get(const std::string& name);
  /// conv + bias (+ leaky rectifier when `activate`).
  ad::Var conv(const std::string& layer, ad::Var x, bool activate);

 private:
  ad::Graph& g_;
  const ModelParams& params_;
  ModelParams* mutable_ = nullptr;
  std::map<std::string, ad::Var> bound_;
};

struct PropagationSettings {
  double lambda = 0.2;
  double epsilon = 1e-3;
  /// Called with (iteration, module input) right before each propagation module.
  std::function<void(int, const Tensor&)> probe;
};

struct FirstStage {
  ad::Var density;           // 1 x h x w, unconstrained
  ad::Var segmentation;      // (K+1) x h x w softmax
  ad::Var shared;            // deep shared features
  ad::Var density_features;  // branch width channels
  ad::Var seg_features;
};

/// Zero-pads the image to multiples of the output stride and runs layers 1-7.
FirstStage first_stage_forward(ParamBinder& p, const Tensor& image, const std::string& prefix = "");

/// 1 where max(density, 0) >= epsilon, lambda elsewhere.
Tensor dampening_matrix(const Tensor& density, double lambda, double epsilon);

/// One bottom-up/top-down pass; output has the input's shape.
ad::Var hourglass_module(ParamBinder& p, const std::string& prefix, ad::Var features);
/// One graph-convolution layer: leaky(W * (A h) + b) with local cosine adjacency.
ad::Var gcn_module(ParamBinder& p, const std::string& prefix, ad::Var features);

/// T rounds of features <- module_t(W_d * features).
ad::Var propagate_density_aware(ParamBinder& p, ad::Var features, const Tensor& first_density,
                                const PropagationSettings& settings);

/// Concatenates segmentation features with the first-stage density map.
ad::Var complementary_attention_seg(ad::Var seg_features, ad::Var density);
/// Concatenates density features with the refined segmentation and runs the
/// refinement density head.
ad::Var complementary_attention_density(ParamBinder& p, ad::Var density_features, ad::Var segmentation);
/// Per-channel product with a single-channel attention map.
ad::Var naive_attention(ad::Var features, ad::Var attention_map);
Tensor naive_attention(const Tensor& features, const Tensor& attention_map);

/// Graph-level outputs of one forward pass. For baselines without a
/// segmentation branch the segmentation vars are invalid; for models without
/// refinement the refined vars alias the first-stage ones.
struct ForwardVars {
  ad::Var first_density;
  ad::Var first_seg;
  ad::Var refined_density;
  ad::Var refined_seg;
  ad::Var fine_grained;  // K x h x w
  Tensor dampening;
  bool has_segmentation = false;
  bool has_refinement = false;
};

ForwardVars forward(ParamBinder& p, const Tensor& image, const PropagationSettings& settings);

struct ForwardOutputs {
  Tensor first_density;
  Tensor first_seg;
  Tensor refined_density;
  Tensor refined_seg;
  Tensor fine_grained;
  Tensor dampening;
};

ForwardOutputs full_forward(const ModelParams& params, const Tensor& image, const PropagationSettings& settings = {});

}  // namespace finecount
