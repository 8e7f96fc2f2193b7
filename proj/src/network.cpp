#include "finecount/network.hpp"

#include <cmath>
#include <random>

#include "finecount/errors.hpp"

namespace finecount {

using ad::Var;

namespace {

constexpr int kMinInputSide = 8;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

template <class E>
E parse_enum(const std::string& s, std::initializer_list<std::pair<const char*, E>> table, const char* what) {
  for (const auto& [name, value] : table)
    if (s == name) return value;
  throw UsageError(std::string("unknown ") + what + " '" + s + "'");
}

}  // namespace

std::string to_string(Propagation p) {
  switch (p) {
    case Propagation::none: return "none";
    case Propagation::hourglass: return "hourglass";
    case Propagation::gcn: return "gcn";
  }
  return "none";
}

std::string to_string(Attention a) {
  switch (a) {
    case Attention::none: return "none";
    case Attention::coatt: return "coatt";
    case Attention::naive: return "naive";
  }
  return "none";
}

std::string to_string(ModelKind m) {
  switch (m) {
    case ModelKind::ours: return "ours";
    case ModelKind::onenet: return "onenet";
    case ModelKind::twonets: return "twonets";
    case ModelKind::segment: return "segment";
  }
  return "ours";
}

Propagation propagation_from_string(const std::string& s) {
  return parse_enum<Propagation>(
      s, {{"none", Propagation::none}, {"hourglass", Propagation::hourglass}, {"gcn", Propagation::gcn}},
      "propagation");
}

Attention attention_from_string(const std::string& s) {
  return parse_enum<Attention>(s, {{"none", Attention::none}, {"coatt", Attention::coatt}, {"naive", Attention::naive}},
                               "attention");
}

ModelKind model_from_string(const std::string& s) {
  return parse_enum<ModelKind>(s,
                               {{"ours", ModelKind::ours},
                                {"onenet", ModelKind::onenet},
                                {"twonets", ModelKind::twonets},
                                {"segment", ModelKind::segment}},
                               "model");
}

// ---- ArchConfig --------------------------------------------------------------

void ArchConfig::validate() const {
  if (k < 1) throw UsageError("K must be >= 1");
  if (in_channels != 1 && in_channels != 3) throw UsageError("input channels must be 1 or 3");
  if (widths.early < 1 || widths.middle < 1 || widths.deep < 1 || widths.branch < 1)
    throw UsageError("layer widths must be positive");
  if (iterations < 1) throw UsageError("propagation iterations must be >= 1");
  if (hourglass_depth < 1) throw UsageError("hourglass depth must be >= 1");
  if (gcn_radius < 1) throw UsageError("GCN window radius must be >= 1");
}

nlohmann::json ArchConfig::to_json() const {
  return {{"k", k},
          {"in_channels", in_channels},
          {"widths", {widths.early, widths.middle, widths.deep, widths.branch}},
          {"model", to_string(model)},
          {"propagation", to_string(propagation)},
          {"attention", to_string(attention)},
          {"iterations", iterations},
          {"hourglass_depth", hourglass_depth},
          {"gcn_radius", gcn_radius}};
}

ArchConfig ArchConfig::from_json(const nlohmann::json& j) {
  ArchConfig a;
  a.k = j.value("k", a.k);
  a.in_channels = j.value("in_channels", a.in_channels);
  if (j.contains("widths")) {
    auto w = j["widths"].get<std::vector<int>>();
    if (w.size() != 4) throw UsageError("widths must have 4 entries");
    a.widths = {w[0], w[1], w[2], w[3]};
  }
  a.model = model_from_string(j.value("model", to_string(a.model)));
  a.propagation = propagation_from_string(j.value("propagation", to_string(a.propagation)));
  a.attention = attention_from_string(j.value("attention", to_string(a.attention)));
  a.iterations = j.value("iterations", a.iterations);
  a.hourglass_depth = j.value("hourglass_depth", a.hourglass_depth);
  a.gcn_radius = j.value("gcn_radius", a.gcn_radius);
  return a;
}

// ---- ModelParams -------------------------------------------------------------

void ModelParams::add_conv(const std::string& layer, int in_channels, int out_channels, int kernel) {
  std::uint64_t h = fnv1a(layer);
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  std::mt19937_64 rng(seq);
  double fan_in = static_cast<double>(in_channels) * kernel * kernel;
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  ad::Parameter w{Tensor(out_channels, in_channels, kernel * kernel), {}};
  for (auto& v : w.value.data()) v = dist(rng);
  tensors_[layer + ".weight"] = std::move(w);
  tensors_[layer + ".bias"] = ad::Parameter{Tensor(out_channels, 1, 1), {}};
}

ad::Parameter& ModelParams::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw DataError("model has no parameter '" + name + "'");
  return it->second;
}

const ad::Parameter& ModelParams::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw DataError("model has no parameter '" + name + "'");
  return it->second;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : tensors_) n += p.value.size();
  return n;
}

void ModelParams::zero_grad() {
  for (auto& [_, p] : tensors_) p.grad = Tensor(p.value.channels(), p.value.height(), p.value.width());
}

bool ModelParams::operator==(const ModelParams& o) const {
  if (!(arch_ == o.arch_) || seed_ != o.seed_ || tensors_.size() != o.tensors_.size()) return false;
  for (const auto& [name, p] : tensors_) {
    auto it = o.tensors_.find(name);
    if (it == o.tensors_.end() || !(it->second.value == p.value)) return false;
  }
  return true;
}

namespace {

void add_fcn7(ModelParams& m, const std::string& prefix, const ArchConfig& a, bool with_density, int density_out,
              bool with_seg) {
  const auto& w = a.widths;
  m.add_conv(prefix + "shared.conv1", a.in_channels, w.early, 5);
  m.add_conv(prefix + "shared.conv2", w.early, w.early, 5);
  m.add_conv(prefix + "shared.conv3", w.early, w.middle, 5);
  m.add_conv(prefix + "shared.conv4", w.middle, w.middle, 5);
  m.add_conv(prefix + "shared.conv5", w.middle, w.deep, 5);
  if (with_density) {
    m.add_conv(prefix + "density.conv6", w.deep, w.branch, 5);
    m.add_conv(prefix + "density.conv7", w.branch, density_out, 5);
  }
  if (with_seg) {
    m.add_conv(prefix + "seg.conv6", w.deep, w.branch, 5);
    m.add_conv(prefix + "seg.conv7", w.branch, a.k + 1, 5);
  }
}

}  // namespace

ModelParams build_model(const ArchConfig& arch, std::uint64_t seed) {
  arch.validate();
  ModelParams m(arch, seed);
  int b = arch.widths.branch;
  switch (arch.model) {
    case ModelKind::onenet:
      add_fcn7(m, "", arch, true, arch.k, false);
      break;
    case ModelKind::twonets:
      for (int j = 1; j <= arch.k; ++j) add_fcn7(m, "net" + std::to_string(j) + ".", arch, true, 1, false);
      break;
    case ModelKind::segment:
      add_fcn7(m, "", arch, true, 1, true);
      break;
    case ModelKind::ours: {
      add_fcn7(m, "", arch, true, 1, true);
      int entry_in = arch.attention == Attention::coatt ? b + 1 : b;
      m.add_conv("refine_seg.entry", entry_in, b, 3);
      for (int t = 0; t < arch.iterations; ++t) {
        std::string pre = "refine_seg.prop" + std::to_string(t);
        if (arch.propagation == Propagation::hourglass) {
          for (int level = 1; level <= arch.hourglass_depth; ++level) {
            m.add_conv(pre + ".down" + std::to_string(level), b, b, 3);
            m.add_conv(pre + ".up" + std::to_string(level), b, b, 3);
          }
          m.add_conv(pre + ".bottleneck", b, b, 3);
        } else if (arch.propagation == Propagation::gcn) {
          m.add_conv(pre + ".gcn", b, b, 1);
        }
      }
      m.add_conv("refine_seg.head1", b, b, 5);
      m.add_conv("refine_seg.head2", b, arch.k + 1, 5);
      int dens_in = arch.attention == Attention::coatt ? b + arch.k + 1 : b;
      m.add_conv("refine_density.head1", dens_in, b, 5);
      m.add_conv("refine_density.head2", b, 1, 5);
      break;
    }
  }
  return m;
}

ModelParams build_backbone(int k, std::uint64_t seed) {
  ArchConfig a;
  a.k = k;
  return build_model(a, seed);
}

ModelParams build_baseline(ModelKind kind, int k, std::uint64_t seed) {
  ArchConfig a;
  a.k = k;
  a.model = kind;
  return build_model(a, seed);
}

// ---- binding -----------------------------------------------------------------

Var ParamBinder::get(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var v = mutable_ ? g_.param(mutable_->at(name)) : g_.constant(params_.at(name).value);
  bound_.emplace(name, v);
  return v;
}

Var ParamBinder::conv(const std::string& layer, Var x, bool activate) {
  Var w = get(layer + ".weight");
  int kernel = static_cast<int>(std::lround(std::sqrt(w.value().width())));
  Var y = ad::conv2d(x, w, get(layer + ".bias"), kernel);
  return activate ? ad::leaky_relu(y, ArchConfig::kLeakySlope) : y;
}

// ---- components ----------------------------------------------------------------

namespace {

Tensor prepare_input(const Tensor& image, int channels) {
  if (image.height() < kMinInputSide || image.width() < kMinInputSide)
    throw DataError("input image " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                    " is smaller than " + std::to_string(kMinInputSide) + "x" + std::to_string(kMinInputSide));
  int s = ArchConfig::kOutputStride;
  int h = (image.height() + s - 1) / s * s;
  int w = (image.width() + s - 1) / s * s;
  Tensor x = image.pad_to(h, w);
  if (x.channels() == channels) return x;
  Tensor out(channels, h, w);
  if (channels == 1) {
    for (int c = 0; c < x.channels(); ++c)
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += x.channel(c)[i] / x.channels();
  } else if (x.channels() == 1) {
    for (int c = 0; c < channels; ++c) std::copy(x.data().begin(), x.data().end(), out.channel(c).begin());
  } else {
    throw DataError("cannot adapt a " + std::to_string(x.channels()) + "-channel image to " +
                    std::to_string(channels) + " channels");
  }
  return out;
}

Var shared_extractor(ParamBinder& p, Var x, const std::string& prefix) {
  x = p.conv(prefix + "shared.conv1", x, true);
  x = ad::max_pool2(p.conv(prefix + "shared.conv2", x, true));
  x = p.conv(prefix + "shared.conv3", x, true);
  x = ad::max_pool2(p.conv(prefix + "shared.conv4", x, true));
  return p.conv(prefix + "shared.conv5", x, true);
}

Var hourglass_level(ParamBinder& p, const std::string& prefix, Var x, int level, int depth) {
  std::string l = std::to_string(level);
  Var skip = p.conv(prefix + ".down" + l, x, true);
  Var pooled = ad::avg_pool2(skip);
  Var inner = level == depth ? p.conv(prefix + ".bottleneck", pooled, true)
                             : hourglass_level(p, prefix, pooled, level + 1, depth);
  Var up = ad::upsample_nearest(inner, skip.value().height(), skip.value().width());
  return p.conv(prefix + ".up" + l, ad::add(up, skip), true);
}

}  // namespace

FirstStage first_stage_forward(ParamBinder& p, const Tensor& image, const std::string& prefix) {
  Var x = p.graph().constant(prepare_input(image, p.arch().in_channels));
  FirstStage fs;
  fs.shared = shared_extractor(p, x, prefix);
  fs.density_features = p.conv(prefix + "density.conv6", fs.shared, true);
  fs.density = p.conv(prefix + "density.conv7", fs.density_features, false);
  if (p.arch().model == ModelKind::ours || p.arch().model == ModelKind::segment) {
    fs.seg_features = p.conv(prefix + "seg.conv6", fs.shared, true);
    fs.segmentation = ad::softmax_channels(p.conv(prefix + "seg.conv7", fs.seg_features, false));
  }
  return fs;
}

Tensor dampening_matrix(const Tensor& density, double lambda, double epsilon) {
  if (!(lambda >= 0)) throw UsageError("dampening factor must be >= 0");
  if (!(epsilon > 0)) throw UsageError("density threshold must be > 0");
  if (density.channels() != 1) throw DataError("dampening matrix needs a single-channel density map");
  Tensor wd(1, density.height(), density.width());
  for (std::size_t i = 0; i < wd.size(); ++i) wd[i] = std::max(density[i], 0.0) >= epsilon ? 1.0 : lambda;
  return wd;
}

Var hourglass_module(ParamBinder& p, const std::string& prefix, Var features) {
  int depth = p.arch().hourglass_depth;
  int need = 1 << depth;
  const Tensor& f = features.value();
  if (f.height() < need || f.width() < need)
    throw DataError("feature map " + std::to_string(f.height()) + "x" + std::to_string(f.width()) +
                    " is too small for a depth-" + std::to_string(depth) + " hourglass (needs " +
                    std::to_string(need) + "x" + std::to_string(need) + ")");
  return hourglass_level(p, prefix, features, 1, depth);
}

Var gcn_module(ParamBinder& p, const std::string& prefix, Var features) {
  Var agg = ad::local_cosine_aggregate(features, p.arch().gcn_radius);
  return p.conv(prefix + ".gcn", agg, true);
}

Var propagate_density_aware(ParamBinder& p, Var features, const Tensor& first_density,
                            const PropagationSettings& settings) {
  const auto& arch = p.arch();
  if (!features.value().same_plane(first_density))
    throw DataError("propagation: features and density map are misaligned");
  Tensor wd = dampening_matrix(first_density, settings.lambda, settings.epsilon);
  Var h = features;
  for (int t = 0; t < arch.iterations; ++t) {
    Var input = ad::scale_by(h, wd);
    if (settings.probe) settings.probe(t, input.value());
    std::string pre = "refine_seg.prop" + std::to_string(t);
    if (arch.propagation == Propagation::hourglass)
      h = hourglass_module(p, pre, input);
    else if (arch.propagation == Propagation::gcn)
      h = gcn_module(p, pre, input);
    else
      h = input;
  }
  return h;
}

Var complementary_attention_seg(Var seg_features, Var density) {
  if (!seg_features.value().same_plane(density.value()))
    throw DataError("complementary attention: segmentation features and density map are misaligned");
  return ad::concat({seg_features, density});
}

Var complementary_attention_density(ParamBinder& p, Var density_features, Var segmentation) {
  if (!density_features.value().same_plane(segmentation.value()))
    throw DataError("complementary attention: density features and segmentation are misaligned");
  Var x = ad::concat({density_features, segmentation});
  return p.conv("refine_density.head2", p.conv("refine_density.head1", x, true), false);
}

Var naive_attention(Var features, Var attention_map) { return ad::mul_broadcast(features, attention_map); }

Tensor naive_attention(const Tensor& features, const Tensor& attention_map) {
  if (attention_map.channels() != 1 || !features.same_plane(attention_map))
    throw DataError("naive attention: attention map misaligned");
  Tensor out = features;
  for (int c = 0; c < out.channels(); ++c)
    for (std::size_t i = 0; i < out.plane(); ++i) out.channel(c)[i] *= attention_map[i];
  return out;
}

// ---- full forward --------------------------------------------------------------

namespace {

Var mix(Var seg, Var density, int k) { return ad::mul_broadcast(ad::slice_channels(seg, 0, k), density); }

}  // namespace

ForwardVars forward(ParamBinder& p, const Tensor& image, const PropagationSettings& settings) {
  const auto& arch = p.arch();
  ForwardVars out;
  switch (arch.model) {
    case ModelKind::onenet: {
      FirstStage fs = first_stage_forward(p, image);
      out.fine_grained = fs.density;
      out.first_density = out.refined_density = ad::sum_channels(fs.density);
      return out;
    }
    case ModelKind::twonets: {
      std::vector<Var> maps;
      for (int j = 1; j <= arch.k; ++j)
        maps.push_back(first_stage_forward(p, image, "net" + std::to_string(j) + ".").density);
      out.fine_grained = ad::concat(maps);
      out.first_density = out.refined_density = ad::sum_channels(out.fine_grained);
      return out;
    }
    case ModelKind::segment: {
      FirstStage fs = first_stage_forward(p, image);
      out.first_density = out.refined_density = fs.density;
      out.first_seg = out.refined_seg = fs.segmentation;
      out.fine_grained = mix(fs.segmentation, fs.density, arch.k);
      out.has_segmentation = true;
      return out;
    }
    case ModelKind::ours:
      break;
  }

  FirstStage fs = first_stage_forward(p, image);
  out.first_density = fs.density;
  out.first_seg = fs.segmentation;
  out.has_segmentation = out.has_refinement = true;

  // W_d depends on a detached copy of the first-stage density.
  Tensor density_const = fs.density.value();
  out.dampening = dampening_matrix(density_const, settings.lambda, settings.epsilon);

  Var seg_in;
  switch (arch.attention) {
    case Attention::coatt: seg_in = complementary_attention_seg(fs.seg_features, fs.density); break;
    case Attention::naive: seg_in = naive_attention(fs.seg_features, fs.density); break;
    case Attention::none: seg_in = fs.seg_features; break;
  }
  Var h = p.conv("refine_seg.entry", seg_in, true);
  if (arch.propagation != Propagation::none) h = propagate_density_aware(p, h, density_const, settings);
  Var logits = p.conv("refine_seg.head2", p.conv("refine_seg.head1", h, true), false);
  out.refined_seg = ad::softmax_channels(logits);

  switch (arch.attention) {
    case Attention::coatt:
      out.refined_density = complementary_attention_density(p, fs.density_features, out.refined_seg);
      break;
    case Attention::naive: {
      Var foreground = ad::affine(ad::slice_channels(out.refined_seg, arch.k, 1), -1.0, 1.0);
      Var x = naive_attention(fs.density_features, foreground);
      out.refined_density = p.conv("refine_density.head2", p.conv("refine_density.head1", x, true), false);
      break;
    }
    case Attention::none:
      out.refined_density =
          p.conv("refine_density.head2", p.conv("refine_density.head1", fs.density_features, true), false);
      break;
  }
  out.fine_grained = mix(out.refined_seg, out.refined_density, arch.k);
  return out;
}

ForwardOutputs full_forward(const ModelParams& params, const Tensor& image, const PropagationSettings& settings) {
  ad::Graph g;
  ParamBinder p(g, params);
  ForwardVars v = forward(p, image, settings);
  ForwardOutputs out;
  out.first_density = v.first_density.value();
  out.refined_density = v.refined_density.value();
  out.fine_grained = v.fine_grained.value();
  if (v.has_segmentation) {
    out.first_seg = v.first_seg.value();
    out.refined_seg = v.refined_seg.value();
  }
  out.dampening = std::move(v.dampening);
  return out;
}

}  // namespace finecount
