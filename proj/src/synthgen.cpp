#include "finecount/synthgen.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "finecount/errors.hpp"
#include "finecount/image_io.hpp"

namespace finecount {

namespace {

constexpr int kChainAttempts = 200;
constexpr int kWalkerAttempts = 2000;
constexpr int kSceneRedraws = 50;

struct Point {
  double x, y;
};

double dist(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

Point snap(Point p) { return {std::floor(p.x) + 0.5, std::floor(p.y) + 0.5}; }

void draw_blob(Tensor& img, Point c, double radius, double intensity) {
  int y0 = std::max(0, static_cast<int>(c.y - radius - 1)), y1 = std::min(img.height() - 1, static_cast<int>(c.y + radius + 1));
  int x0 = std::max(0, static_cast<int>(c.x - radius - 1)), x1 = std::min(img.width() - 1, static_cast<int>(c.x + radius + 1));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      double d = std::hypot(x + 0.5 - c.x, y + 0.5 - c.y);
      double v = intensity * std::clamp(radius + 0.5 - d, 0.0, 1.0);
      img(0, y, x) = std::max(img(0, y, x), v);
    }
}

}  // namespace

void SceneSpec::validate() const {
  if (height < 8 || width < 8) throw UsageError("scene must be at least 8x8");
  if (n_queue < 0 || n_walkers < 0 || n_queue + n_walkers < 1) throw UsageError("scene needs at least one person");
  if (!(blob_radius > 0)) throw UsageError("blob radius must be > 0");
  if (!(queue_spacing > 2 * blob_radius)) throw UsageError("queue spacing must exceed twice the blob radius");
  if (noise_level < 0) throw UsageError("noise level must be >= 0");
  if (marker_x < 0 || marker_x >= width || marker_y < 0 || marker_y >= height)
    throw UsageError("marker lies outside the scene");
}

Sample generate_scene(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double margin = spec.blob_radius + 1;
  auto inside = [&](Point p) {
    return p.x >= margin && p.x < spec.width - margin && p.y >= margin && p.y < spec.height - margin;
  };

  Point marker{spec.marker_x, spec.marker_y};
  std::vector<Point> queue;
  if (spec.n_queue > 0) {
    bool placed = false;
    for (int attempt = 0; attempt < kChainAttempts && !placed; ++attempt) {
      double base = unit(rng) * 2 * std::numbers::pi;
      queue.clear();
      Point prev = marker;
      placed = true;
      for (int i = 0; i < spec.n_queue; ++i) {
        double a = base + (2 * unit(rng) - 1) * SceneSpec::kChainAngleJitter;
        Point next = snap({prev.x + spec.queue_spacing * std::cos(a), prev.y + spec.queue_spacing * std::sin(a)});
        if (!inside(next)) {
          placed = false;
          break;
        }
        queue.push_back(next);
        prev = next;
      }
    }
    if (!placed) throw DataError("could not fit a queue of " + std::to_string(spec.n_queue) + " in the scene");
  }

  std::vector<Point> walkers;
  double chain_clearance = 3 * spec.queue_spacing;
  double walker_clearance = 1.5 * spec.queue_spacing;
  for (int i = 0; i < spec.n_walkers; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kWalkerAttempts && !placed; ++attempt) {
      Point p = snap({margin + unit(rng) * (spec.width - 2 * margin), margin + unit(rng) * (spec.height - 2 * margin)});
      if (!inside(p)) continue;
      bool ok = dist(p, marker) > chain_clearance;
      for (const auto& q : queue) ok = ok && dist(p, q) > chain_clearance;
      for (const auto& w : walkers) ok = ok && dist(p, w) > walker_clearance;
      if (ok) {
        walkers.push_back(p);
        placed = true;
      }
    }
    if (!placed) throw DataError("scene too crowded: could not place walker " + std::to_string(i));
  }

  Sample s;
  s.id = "scene_" + std::to_string(spec.seed);
  s.image = Tensor(1, spec.height, spec.width, SceneSpec::kBackground);
  int half = std::max(2, static_cast<int>(std::lround(spec.blob_radius)));
  for (int y = static_cast<int>(marker.y) - half; y < static_cast<int>(marker.y) + half; ++y)
    for (int x = static_cast<int>(marker.x) - half; x < static_cast<int>(marker.x) + half; ++x)
      if (y >= 0 && y < spec.height && x >= 0 && x < spec.width) s.image(0, y, x) = SceneSpec::kMarkerIntensity;
  for (const auto& p : queue) draw_blob(s.image, p, spec.blob_radius, SceneSpec::kBlobIntensity);
  for (const auto& p : walkers) draw_blob(s.image, p, spec.blob_radius, SceneSpec::kBlobIntensity);
  if (spec.noise_level > 0) {
    std::uniform_real_distribution<double> noise(-spec.noise_level, spec.noise_level);
    for (auto& v : s.image.data()) v = std::clamp(v + noise(rng), 0.0, 1.0);
  }

  s.annotation.k = 2;
  s.annotation.height = spec.height;
  s.annotation.width = spec.width;
  for (const auto& p : queue) s.annotation.points.push_back({p.x, p.y, 1});
  for (const auto& p : walkers) s.annotation.points.push_back({p.x, p.y, 2});
  return s;
}

nlohmann::json SpecRanges::to_json() const {
  return {{"height", height},
          {"width", width},
          {"n_queue", {n_queue.lo, n_queue.hi}},
          {"n_walkers", {n_walkers.lo, n_walkers.hi}},
          {"queue_spacing", {queue_spacing.lo, queue_spacing.hi}},
          {"blob_radius", {blob_radius.lo, blob_radius.hi}},
          {"noise_level", {noise_level.lo, noise_level.hi}},
          {"marker_margin", marker_margin}};
}

SpecRanges SpecRanges::from_json(const nlohmann::json& j) {
  SpecRanges r;
  auto ir = [&](const char* key, IntRange& out) {
    if (j.contains(key)) out = {j[key].at(0).get<int>(), j[key].at(1).get<int>()};
  };
  auto rr = [&](const char* key, RealRange& out) {
    if (j.contains(key)) out = {j[key].at(0).get<double>(), j[key].at(1).get<double>()};
  };
  r.height = j.value("height", r.height);
  r.width = j.value("width", r.width);
  ir("n_queue", r.n_queue);
  ir("n_walkers", r.n_walkers);
  rr("queue_spacing", r.queue_spacing);
  rr("blob_radius", r.blob_radius);
  rr("noise_level", r.noise_level);
  r.marker_margin = j.value("marker_margin", r.marker_margin);
  return r;
}

GeneratedManifests generate_manifest(const std::filesystem::path& out_dir, int n_train, int n_test,
                                     const SpecRanges& ranges, std::uint64_t seed) {
  if (n_train < 1 || n_test < 1) throw UsageError("n_train and n_test must be >= 1");
  if (ranges.n_queue.lo > ranges.n_queue.hi || ranges.n_walkers.lo > ranges.n_walkers.hi)
    throw UsageError("empty count range");
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw DataError("cannot create " + (out_dir / "images").string() + ": " + ec.message());

  std::mt19937_64 rng(seed);
  auto uniform_int = [&](IntRange r) { return std::uniform_int_distribution<int>(r.lo, r.hi)(rng); };
  auto uniform_real = [&](RealRange r) { return r.lo + (r.hi - r.lo) * std::uniform_real_distribution<double>(0, 1)(rng); };

  GeneratedManifests out;
  out.train_path = out_dir / "train.json";
  out.test_path = out_dir / "test.json";
  for (int part = 0; part < 2; ++part) {
    DatasetManifest& m = part == 0 ? out.train : out.test;
    int n = part == 0 ? n_train : n_test;
    m.k = 2;
    m.category_names = {"queue", "walker"};
    m.split = part == 0 ? Split::train : Split::test;
    m.base_dir = out_dir;
    for (int i = 0; i < n; ++i) {
      SceneSpec spec;
      Sample s;
      for (int attempt = 0;; ++attempt) {
        spec.height = ranges.height;
        spec.width = ranges.width;
        spec.n_queue = uniform_int(ranges.n_queue);
        spec.n_walkers = uniform_int(ranges.n_walkers);
        spec.queue_spacing = uniform_real(ranges.queue_spacing);
        spec.blob_radius = uniform_real(ranges.blob_radius);
        spec.noise_level = uniform_real(ranges.noise_level);
        spec.marker_x = uniform_real({ranges.marker_margin, ranges.width - ranges.marker_margin});
        spec.marker_y = uniform_real({ranges.marker_margin, ranges.height - ranges.marker_margin});
        spec.seed = rng();
        try {
          s = generate_scene(spec);
          break;
        } catch (const DataError&) {
          // Redraw all scene parameters when the sampled layout cannot be placed.
          if (attempt + 1 >= kSceneRedraws) throw;
        }
      }
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%04d", part == 0 ? "train" : "test", i);
      std::string rel = std::string("images/") + name + ".png";
      write_png(out_dir / rel, s.image);
      m.samples.push_back({name, rel, s.annotation});
    }
  }
  save_manifest(out.train, out.train_path);
  save_manifest(out.test, out.test_path);
  return out;
}

}  // namespace finecount
