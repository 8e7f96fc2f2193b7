#pragma once

#include <cstdint>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "finecount/annotations.hpp"

namespace finecount {

/// One synthetic "bus stop" scene: a square marker, a chain of queue members
/// leading away from it (category 1) and isolated walkers (category 2).
/// Both categories use the same blob so only context separates them.
struct SceneSpec {
  int height = 128;
  int width = 128;
  int n_queue = 4;
  int n_walkers = 4;
  double marker_x = 64;
  double marker_y = 64;
  double queue_spacing = 12;
  double blob_radius = 3;
  double noise_level = 0.02;
  std::uint64_t seed = 0;

  static constexpr double kBackground = 0.15;
  static constexpr double kBlobIntensity = 0.8;
  static constexpr double kMarkerIntensity = 1.0;
  /// Per-step angular deviation of the chain from its base direction, radians.
  static constexpr double kChainAngleJitter = 0.26;
  /// Dots are snapped to pixel centers, so chain distances deviate by at most this.
  static constexpr double kSnapJitter = 0.7072;

  void validate() const;
};

Sample generate_scene(const SceneSpec& spec);

struct IntRange {
  int lo;
  int hi;
};
struct RealRange {
  double lo;
  double hi;
};

/// Ranges sampled uniformly per scene. Marker positions are drawn uniformly
/// at least `marker_margin` pixels from the border.
struct SpecRanges {
  int height = 128;
  int width = 128;
  IntRange n_queue{2, 5};
  IntRange n_walkers{2, 5};
  RealRange queue_spacing{9, 12};
  RealRange blob_radius{2.5, 3.5};
  RealRange noise_level{0.0, 0.05};
  double marker_margin = 12;

  nlohmann::json to_json() const;
  static SpecRanges from_json(const nlohmann::json& j);
};

struct GeneratedManifests {
  DatasetManifest train;
  DatasetManifest test;
  std::filesystem::path train_path;
  std::filesystem::path test_path;
};

/// Writes images/<split>_NNNN.png plus train.json and test.json under `out_dir`.
GeneratedManifests generate_manifest(const std::filesystem::path& out_dir, int n_train, int n_test,
                                     const SpecRanges& ranges, std::uint64_t seed);

}  // namespace finecount
