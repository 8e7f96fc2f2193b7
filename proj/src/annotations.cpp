#include "finecount/annotations.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "finecount/errors.hpp"
#include "finecount/image_io.hpp"

namespace finecount {

using nlohmann::json;

void DotAnnotation::validate(const std::string& sample_id) const {
  std::string where = sample_id.empty() ? std::string() : " in sample '" + sample_id + "'";
  if (k < 1) throw DataError("category count must be >= 1" + where);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (!(p.x >= 0 && p.x < width && p.y >= 0 && p.y < height))
      throw DataError("point " + std::to_string(i) + where + " at (" + std::to_string(p.x) + ", " +
                      std::to_string(p.y) + ") lies outside the " + std::to_string(width) + "x" +
                      std::to_string(height) + " image");
    if (p.category < 1 || p.category > k)
      throw DataError("point " + std::to_string(i) + where + " has category " + std::to_string(p.category) +
                      " outside 1.." + std::to_string(k));
  }
}

std::vector<DotPoint> DotAnnotation::of_category(int category) const {
  std::vector<DotPoint> out;
  std::copy_if(points.begin(), points.end(), std::back_inserter(out),
               [&](const DotPoint& p) { return p.category == category; });
  return out;
}

std::size_t DotAnnotation::count(int category) const {
  return std::count_if(points.begin(), points.end(), [&](const DotPoint& p) { return p.category == category; });
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw DataError("unknown split '" + s + "'");
}

Sample DatasetManifest::load_sample(std::size_t i) const {
  const auto& e = samples.at(i);
  Sample s{e.id, read_png(image_path(i)), e.annotation};
  if (s.image.height() != e.annotation.height || s.image.width() != e.annotation.width)
    throw DataError("image size of sample '" + e.id + "' changed since the manifest was loaded");
  return s;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("manifest not found: " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw DataError("malformed manifest " + path.string() + ": " + e.what());
  }

  DatasetManifest m;
  m.base_dir = path.parent_path();
  try {
    m.k = j.at("k").get<int>();
    if (m.k < 1) throw DataError("manifest k must be >= 1");
    m.category_names = j.at("category_names").get<std::vector<std::string>>();
    if (static_cast<int>(m.category_names.size()) != m.k)
      throw DataError("manifest has " + std::to_string(m.category_names.size()) + " category names for k=" +
                      std::to_string(m.k));
    if (j.contains("split")) m.split = split_from_string(j["split"].get<std::string>());
    for (const auto& js : j.at("samples")) {
      ManifestEntry e;
      e.id = js.at("id").get<std::string>();
      e.image = js.at("image").get<std::string>();
      e.annotation.k = m.k;
      for (const auto& jp : js.at("points")) {
        if (!jp.is_array() || jp.size() != 3) throw DataError("point in sample '" + e.id + "' is not [x, y, category]");
        e.annotation.points.push_back({jp[0].get<double>(), jp[1].get<double>(), jp[2].get<int>()});
      }
      m.samples.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw DataError("malformed manifest " + path.string() + ": " + e.what());
  }

  for (std::size_t i = 0; i < m.samples.size(); ++i) {
    auto& e = m.samples[i];
    Tensor img = read_png(m.image_path(i));
    e.annotation.height = img.height();
    e.annotation.width = img.width();
    e.annotation.validate(e.id);
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  json j;
  j["k"] = manifest.k;
  j["category_names"] = manifest.category_names;
  j["split"] = to_string(manifest.split);
  j["samples"] = json::array();
  for (const auto& e : manifest.samples) {
    json pts = json::array();
    for (const auto& p : e.annotation.points) pts.push_back({p.x, p.y, p.category});
    j["samples"].push_back({{"id", e.id}, {"image", e.image}, {"points", pts}});
  }
  std::ofstream os(path);
  if (!os) throw DataError("cannot write manifest " + path.string());
  os << j.dump(2) << '\n';
}

json StatsReport::to_json() const {
  return {{"n_images", n_images},
          {"min", min_count},
          {"avg", avg_count},
          {"max", max_count},
          {"total", total_count},
          {"category_totals", category_totals},
          {"category_share_percent", category_share_percent},
          {"avg_resolution", {avg_height, avg_width}}};
}

StatsReport dataset_stats(const DatasetManifest& manifest) {
  if (manifest.samples.empty()) throw DataError("dataset_stats: empty manifest");
  StatsReport r;
  r.n_images = manifest.samples.size();
  r.min_count = std::numeric_limits<std::size_t>::max();
  r.category_totals.assign(manifest.k, 0);
  for (const auto& e : manifest.samples) {
    std::size_t n = e.annotation.points.size();
    r.min_count = std::min(r.min_count, n);
    r.max_count = std::max(r.max_count, n);
    r.total_count += n;
    for (const auto& p : e.annotation.points) r.category_totals[p.category - 1]++;
    r.avg_height += e.annotation.height;
    r.avg_width += e.annotation.width;
  }
  r.avg_count = static_cast<double>(r.total_count) / r.n_images;
  r.avg_height /= r.n_images;
  r.avg_width /= r.n_images;
  for (auto t : r.category_totals)
    r.category_share_percent.push_back(r.total_count ? 100.0 * t / r.total_count : 0.0);
  return r;
}

SpatialProbabilityMaps spatial_probability_maps(const DatasetManifest& manifest, int grid_height, int grid_width) {
  if (grid_height < 1 || grid_width < 1) throw DataError("probability grid must be at least 1x1");
  SpatialProbabilityMaps out;
  out.category_maps.assign(manifest.k, Tensor(1, grid_height, grid_width));
  out.has_points.assign(manifest.k, false);
  for (const auto& e : manifest.samples) {
    const auto& a = e.annotation;
    for (const auto& p : a.points) {
      int gy = std::min(grid_height - 1, static_cast<int>(p.y * grid_height / a.height));
      int gx = std::min(grid_width - 1, static_cast<int>(p.x * grid_width / a.width));
      out.category_maps[p.category - 1](0, gy, gx) += 1.0;
    }
  }
  for (int c = 0; c < manifest.k; ++c) {
    double total = out.category_maps[c].sum();
    if (total <= 0) continue;
    out.has_points[c] = true;
    for (auto& v : out.category_maps[c].data()) v /= total;
  }
  if (manifest.k >= 2 && out.has_points[0] && out.has_points[1]) {
    out.log_ratio = Tensor(1, grid_height, grid_width);
    for (std::size_t i = 0; i < out.log_ratio.size(); ++i)
      out.log_ratio[i] = std::log((out.category_maps[0][i] + kLogRatioFloor) /
                                  (out.category_maps[1][i] + kLogRatioFloor));
  }
  return out;
}

Tensor average_image(const DatasetManifest& manifest, int height, int width) {
  if (manifest.samples.empty()) throw DataError("average_image: empty manifest");
  std::vector<Tensor> resized;
  int channels = 1;
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    resized.push_back(resize_bilinear(read_png(manifest.image_path(i)), height, width));
    channels = std::max(channels, resized.back().channels());
  }
  Tensor acc(channels, height, width);
  for (const auto& img : resized)
    for (int c = 0; c < channels; ++c) {
      auto src = img.channel(img.channels() == channels ? c : 0);
      auto dst = acc.channel(c);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  for (auto& v : acc.data()) v /= static_cast<double>(resized.size());
  return acc;
}

}  // namespace finecount
