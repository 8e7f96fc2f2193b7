#include "finecount/groundtruth.hpp"

#include <algorithm>
#include <cmath>

#include "finecount/errors.hpp"

namespace finecount {

void KernelSpec::validate() const {
  if (!(sigma > 0)) throw UsageError("kernel sigma must be > 0");
  if (!(truncation_radius >= 3)) throw UsageError("kernel truncation radius must be >= 3 sigma");
  if (mode == KernelMode::adaptive && (k_neighbors < 1 || !(scale_factor > 0)))
    throw UsageError("adaptive kernel needs k_neighbors >= 1 and scale_factor > 0");
}

nlohmann::json KernelSpec::to_json() const {
  return {{"mode", mode == KernelMode::fixed ? "fixed" : "adaptive"},
          {"sigma", sigma},
          {"k_neighbors", k_neighbors},
          {"scale_factor", scale_factor},
          {"truncation_radius", truncation_radius}};
}

KernelSpec KernelSpec::from_json(const nlohmann::json& j) {
  KernelSpec k;
  std::string mode = j.value("mode", std::string("fixed"));
  if (mode == "fixed")
    k.mode = KernelMode::fixed;
  else if (mode == "adaptive")
    k.mode = KernelMode::adaptive;
  else
    throw UsageError("unknown kernel mode '" + mode + "'");
  k.sigma = j.value("sigma", k.sigma);
  k.k_neighbors = j.value("k_neighbors", k.k_neighbors);
  k.scale_factor = j.value("scale_factor", k.scale_factor);
  k.truncation_radius = j.value("truncation_radius", k.truncation_radius);
  return k;
}

std::vector<double> dot_sigmas(const DotAnnotation& annotation, const KernelSpec& kernel) {
  const auto& pts = annotation.points;
  std::vector<double> sig(pts.size(), kernel.sigma);
  if (kernel.mode == KernelMode::fixed) return sig;
  std::vector<double> d;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    d.clear();
    for (std::size_t j = 0; j < pts.size(); ++j)
      if (j != i) d.push_back(std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y));
    if (d.empty()) continue;  // isolated dot keeps the fixed sigma
    std::size_t n = std::min<std::size_t>(kernel.k_neighbors, d.size());
    std::partial_sort(d.begin(), d.begin() + n, d.end());
    double mean = 0;
    for (std::size_t t = 0; t < n; ++t) mean += d[t];
    mean /= n;
    sig[i] = std::clamp(kernel.scale_factor * mean, KernelSpec::kMinAdaptiveSigma, KernelSpec::kMaxAdaptiveSigma);
  }
  return sig;
}

namespace {

void splat_gaussian(Tensor& out, int channel, double px, double py, double sigma, double radius_sigmas) {
  int h = out.height(), w = out.width();
  double radius = radius_sigmas * sigma;
  int y0 = std::max(0, static_cast<int>(std::floor(py - radius)));
  int y1 = std::min(h - 1, static_cast<int>(std::ceil(py + radius)));
  int x0 = std::max(0, static_cast<int>(std::floor(px - radius)));
  int x1 = std::min(w - 1, static_cast<int>(std::ceil(px + radius)));
  double inv = 1.0 / (2 * sigma * sigma);
  double r2 = radius * radius;
  double mass = 0;
  // Pixel (y, x) covers [x, x+1) x [y, y+1); its center is at (x + 0.5, y + 0.5).
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      double dx = x + 0.5 - px, dy = y + 0.5 - py;
      double d2 = dx * dx + dy * dy;
      if (d2 <= r2) mass += std::exp(-d2 * inv);
    }
  if (mass <= 0) {
    out(channel, std::clamp(static_cast<int>(py), 0, h - 1), std::clamp(static_cast<int>(px), 0, w - 1)) += 1.0;
    return;
  }
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      double dx = x + 0.5 - px, dy = y + 0.5 - py;
      double d2 = dx * dx + dy * dy;
      if (d2 <= r2) out(channel, y, x) += std::exp(-d2 * inv) / mass;
    }
}

}  // namespace

Tensor render_density_map(const DotAnnotation& annotation, int category, const KernelSpec& kernel) {
  kernel.validate();
  if (category < 1 || category > annotation.k) throw DataError("category outside 1..K");
  Tensor out(1, annotation.height, annotation.width);
  auto sig = dot_sigmas(annotation, kernel);
  for (std::size_t i = 0; i < annotation.points.size(); ++i) {
    const auto& p = annotation.points[i];
    if (p.category == category) splat_gaussian(out, 0, p.x, p.y, sig[i], kernel.truncation_radius);
  }
  return out;
}

Tensor render_density_maps(const DotAnnotation& annotation, const KernelSpec& kernel) {
  kernel.validate();
  Tensor out(annotation.k, annotation.height, annotation.width);
  auto sig = dot_sigmas(annotation, kernel);
  for (std::size_t i = 0; i < annotation.points.size(); ++i) {
    const auto& p = annotation.points[i];
    if (p.category < 1 || p.category > annotation.k) throw DataError("category outside 1..K");
    splat_gaussian(out, p.category - 1, p.x, p.y, sig[i], kernel.truncation_radius);
  }
  return out;
}

Tensor make_segmentation_maps(const Tensor& densities, double epsilon, double eta) {
  if (!(epsilon > 0) || !(eta > 0)) throw UsageError("epsilon and eta must be > 0");
  int k = densities.channels();
  if (k < 1) throw DataError("make_segmentation_maps needs at least one category");
  Tensor seg(k + 1, densities.height(), densities.width());
  std::size_t n = densities.plane();
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0;
    for (int j = 0; j < k; ++j) total += densities.channel(j)[i];
    for (int j = 0; j < k; ++j) seg.channel(j)[i] = densities.channel(j)[i] / (eta + total);
    seg.channel(k)[i] = total <= epsilon ? 1.0 : 0.0;
  }
  return seg;
}

Tensor make_segmentation_maps(std::span<const Tensor> density_maps, double epsilon, double eta) {
  for (const auto& m : density_maps)
    if (!m.same_plane(density_maps[0])) throw DataError("make_segmentation_maps: dimension mismatch");
  return make_segmentation_maps(stack_channels(density_maps), epsilon, eta);
}

Tensor downsample_density(const Tensor& map, int stride) {
  if (stride < 1) throw UsageError("stride must be >= 1");
  if (stride == 1) return map;
  int oh = (map.height() + stride - 1) / stride;
  int ow = (map.width() + stride - 1) / stride;
  Tensor out(map.channels(), oh, ow);
  for (int c = 0; c < map.channels(); ++c)
    for (int y = 0; y < map.height(); ++y)
      for (int x = 0; x < map.width(); ++x) out(c, y / stride, x / stride) += map(c, y, x);
  return out;
}

Tensor downsample_segmentation(const Tensor& seg, const Tensor& densities, int stride, double epsilon) {
  int k = seg.channels() - 1;
  if (k < 1 || densities.channels() != k || !seg.same_plane(densities))
    throw DataError("downsample_segmentation: segmentation and density maps are misaligned");
  if (stride == 1) return seg;
  Tensor cats = downsample_density(seg.slice_channels(0, k), stride);
  double inv = 1.0 / (static_cast<double>(stride) * stride);
  for (auto& v : cats.data()) v *= inv;
  Tensor dens = downsample_density(densities, stride);
  Tensor out(k + 1, cats.height(), cats.width());
  std::copy(cats.data().begin(), cats.data().end(), out.data().begin());
  for (std::size_t i = 0; i < out.plane(); ++i) {
    double total = 0;
    for (int j = 0; j < k; ++j) total += dens.channel(j)[i];
    out.channel(k)[i] = total <= epsilon ? 1.0 : 0.0;
  }
  return out;
}

GroundTruth make_ground_truth(const Tensor& full_res_densities, int stride, double epsilon, double eta) {
  Tensor seg = make_segmentation_maps(full_res_densities, epsilon, eta);
  return {downsample_density(full_res_densities, stride),
          downsample_segmentation(seg, full_res_densities, stride, epsilon)};
}

}  // namespace finecount
