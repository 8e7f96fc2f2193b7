#pragma once

#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "finecount/annotations.hpp"
#include "finecount/tensor.hpp"

namespace finecount {

enum class KernelMode { fixed, adaptive };

struct KernelSpec {
  KernelMode mode = KernelMode::fixed;
  double sigma = 4.0;  // fixed mode; also the fallback for isolated dots in adaptive mode
  int k_neighbors = 3;
  double scale_factor = 0.3;
  double truncation_radius = 4.0;  // in units of sigma

  static constexpr double kMinAdaptiveSigma = 1.0;
  static constexpr double kMaxAdaptiveSigma = 32.0;

  void validate() const;
  nlohmann::json to_json() const;
  static KernelSpec from_json(const nlohmann::json& j);
};

inline constexpr double kDefaultEpsilon = 1e-3;
inline constexpr double kDefaultEta = 1e-6;

/// Per-dot bandwidths for the annotation (all categories), in point order.
std::vector<double> dot_sigmas(const DotAnnotation& annotation, const KernelSpec& kernel);

/// One unit-mass Gaussian per dot of `category`, truncated at
/// truncation_radius * sigma and renormalized inside the image.
/// Returns a 1 x H x W map.
Tensor render_density_map(const DotAnnotation& annotation, int category, const KernelSpec& kernel);

/// All K category maps stacked as a K x H x W tensor.
Tensor render_density_maps(const DotAnnotation& annotation, const KernelSpec& kernel);

/// (K+1) x H x W soft segmentation: channel j (0-based j < K) is
/// Y_j / (eta + sum Y), channel K is 1 where sum Y <= epsilon else 0.
/// Input is K x H x W stacked densities.
Tensor make_segmentation_maps(const Tensor& densities, double epsilon = kDefaultEpsilon, double eta = kDefaultEta);
Tensor make_segmentation_maps(std::span<const Tensor> density_maps, double epsilon = kDefaultEpsilon,
                              double eta = kDefaultEta);

/// Sum-pools every channel over stride x stride blocks after zero-padding to
/// the next multiple of stride. Total mass is preserved.
Tensor downsample_density(const Tensor& map, int stride);

/// Block-averages the K category channels; recomputes the background channel
/// from the block-summed total density (`densities`, K x H x W at input resolution).
Tensor downsample_segmentation(const Tensor& seg, const Tensor& densities, int stride,
                               double epsilon = kDefaultEpsilon);

/// Density and segmentation targets at the network output stride.
struct GroundTruth {
  Tensor density;       // K x h x w
  Tensor segmentation;  // (K+1) x h x w
};

GroundTruth make_ground_truth(const Tensor& full_res_densities, int stride, double epsilon = kDefaultEpsilon,
                              double eta = kDefaultEta);

}  // namespace finecount
