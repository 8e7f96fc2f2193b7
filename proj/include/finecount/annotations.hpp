#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "finecount/tensor.hpp"

namespace finecount {

/// One annotated person. Coordinates are pixel units, origin top-left;
/// category is 1-based.
struct DotPoint {
  double x = 0;
  double y = 0;
  int category = 1;

  bool operator==(const DotPoint&) const = default;
};

struct DotAnnotation {
  std::vector<DotPoint> points;
  int height = 0;
  int width = 0;
  int k = 1;

  /// Throws DataError naming `sample_id` and the offending point index.
  void validate(const std::string& sample_id = "") const;
  std::vector<DotPoint> of_category(int category) const;
  std::size_t count(int category) const;

  bool operator==(const DotAnnotation&) const = default;
};

struct Sample {
  std::string id;
  Tensor image;
  DotAnnotation annotation;
};

enum class Split { train, val, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct ManifestEntry {
  std::string id;
  std::string image;  // as written in the manifest, relative to base_dir
  DotAnnotation annotation;

  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  int k = 1;
  std::vector<std::string> category_names;
  Split split = Split::train;
  std::vector<ManifestEntry> samples;
  std::filesystem::path base_dir;

  std::filesystem::path image_path(std::size_t i) const { return base_dir / samples.at(i).image; }
  Sample load_sample(std::size_t i) const;

  bool operator==(const DatasetManifest& o) const {
    return k == o.k && category_names == o.category_names && split == o.split && samples == o.samples;
  }
};

/// Parses and validates a manifest. Every image must exist and decode; the
/// decoded size becomes the annotation's image size.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Writes the manifest JSON. Image paths are written verbatim.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

struct StatsReport {
  std::size_t n_images = 0;
  std::size_t min_count = 0;
  std::size_t max_count = 0;
  double avg_count = 0;
  std::size_t total_count = 0;
  std::vector<std::size_t> category_totals;
  std::vector<double> category_share_percent;
  double avg_height = 0;
  double avg_width = 0;

  nlohmann::json to_json() const;
};

StatsReport dataset_stats(const DatasetManifest& manifest);

struct SpatialProbabilityMaps {
  std::vector<Tensor> category_maps;  // one 1 x h x w grid per category
  std::vector<bool> has_points;
  /// log((p1 + floor) / (p2 + floor)); empty unless categories 1 and 2 both have points.
  Tensor log_ratio;
};

inline constexpr double kLogRatioFloor = 1e-6;

SpatialProbabilityMaps spatial_probability_maps(const DatasetManifest& manifest, int grid_height, int grid_width);

/// Per-pixel mean of every image resized to the target. Grayscale images are
/// replicated to RGB when the manifest mixes channel counts.
Tensor average_image(const DatasetManifest& manifest, int height, int width);

}  // namespace finecount
