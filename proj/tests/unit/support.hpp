#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "finecount/annotations.hpp"
#include "finecount/image_io.hpp"
#include "finecount/tensor.hpp"

namespace fc_test {

using finecount::Tensor;

inline Tensor random_tensor(int c, int h, int w, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(c, h, w);
  for (auto& v : t.data()) v = d(rng);
  return t;
}

/// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto dir = std::filesystem::temp_directory_path() / "finecount_tests" /
             (std::string(info->test_suite_name()) + "." + info->name());
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Writes `n` random grayscale images with a few random points each and a
/// manifest referencing them.
inline finecount::DatasetManifest write_random_manifest(const std::filesystem::path& dir, int n, int h, int w, int k,
                                                        std::uint64_t seed, int points_per_image = 4) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(0, w), uy(0, h);
  std::uniform_int_distribution<int> cat(1, k);
  finecount::DatasetManifest m;
  m.k = k;
  for (int j = 1; j <= k; ++j) m.category_names.push_back("cat" + std::to_string(j));
  m.base_dir = dir;
  std::filesystem::create_directories(dir / "img");
  for (int i = 0; i < n; ++i) {
    finecount::ManifestEntry e;
    e.id = "s" + std::to_string(i);
    e.image = "img/s" + std::to_string(i) + ".png";
    finecount::write_png(dir / e.image, random_tensor(1, h, w, rng, 0, 1));
    e.annotation.height = h;
    e.annotation.width = w;
    e.annotation.k = k;
    for (int p = 0; p < points_per_image; ++p) e.annotation.points.push_back({ux(rng), uy(rng), cat(rng)});
    m.samples.push_back(e);
  }
  finecount::save_manifest(m, dir / "manifest.json");
  return m;
}

}  // namespace fc_test
