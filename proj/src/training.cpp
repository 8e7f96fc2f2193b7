#include "finecount/training.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "finecount/errors.hpp"
#include "finecount/map_io.hpp"

namespace finecount {

using nlohmann::json;

// ---- config ------------------------------------------------------------------

void TrainConfig::validate() const {
  kernel.validate();
  if (!(learning_rate > 0)) throw UsageError("learning rate must be > 0");
  if (steps < 1) throw UsageError("steps must be >= 1");
  if (!(lambda >= 0)) throw UsageError("lambda must be >= 0");
  if (!(epsilon > 0) || !(eta > 0)) throw UsageError("epsilon and eta must be > 0");
  if (!(alpha >= 0) || !(beta >= 0)) throw UsageError("loss weights must be >= 0");
  if (iterations < 1) throw UsageError("iterations must be >= 1");
  if (crop < 8 || crop % ArchConfig::kOutputStride != 0) throw UsageError("crop must be >= 8 and divisible by 4");
  if (checkpoint_every < 0) throw UsageError("checkpoint_every must be >= 0");
}

ArchConfig TrainConfig::arch(int k, int in_channels) const {
  ArchConfig a;
  a.k = k;
  a.in_channels = in_channels;
  a.widths = widths;
  a.model = model;
  a.propagation = propagation;
  a.attention = attention;
  a.iterations = iterations;
  a.hourglass_depth = hourglass_depth;
  return a;
}

json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"steps", steps},
          {"seed", seed},
          {"kernel", kernel.to_json()},
          {"lambda", lambda},
          {"epsilon", epsilon},
          {"eta", eta},
          {"alpha", alpha},
          {"beta", beta},
          {"iterations", iterations},
          {"propagation", to_string(propagation)},
          {"attention", to_string(attention)},
          {"model", to_string(model)},
          {"crop", crop},
          {"checkpoint_every", checkpoint_every},
          {"widths", {widths.early, widths.middle, widths.deep, widths.branch}},
          {"hourglass_depth", hourglass_depth}};
}

TrainConfig TrainConfig::from_json(const json& j) { return from_json(j, TrainConfig{}); }

TrainConfig TrainConfig::from_json(const json& j, TrainConfig c) {
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.steps = j.value("steps", c.steps);
    c.seed = j.value("seed", c.seed);
    if (j.contains("kernel")) c.kernel = KernelSpec::from_json(j["kernel"]);
    c.lambda = j.value("lambda", c.lambda);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.eta = j.value("eta", c.eta);
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.iterations = j.value("iterations", c.iterations);
    if (j.contains("propagation")) c.propagation = propagation_from_string(j["propagation"].get<std::string>());
    if (j.contains("attention")) c.attention = attention_from_string(j["attention"].get<std::string>());
    if (j.contains("model")) c.model = model_from_string(j["model"].get<std::string>());
    c.crop = j.value("crop", c.crop);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    if (j.contains("widths")) {
      auto w = j["widths"].get<std::vector<int>>();
      if (w.size() != 4) throw UsageError("widths must have 4 entries");
      c.widths = {w[0], w[1], w[2], w[3]};
    }
    c.hourglass_depth = j.value("hourglass_depth", c.hourglass_depth);
  } catch (const json::exception& e) {
    throw UsageError(std::string("malformed training config: ") + e.what());
  }
  return c;
}

// ---- optimizer ---------------------------------------------------------------

void adam_update(ModelParams& params, AdamState& state, double learning_rate) {
  ++state.step;
  double c1 = 1 - std::pow(AdamState::kBeta1, static_cast<double>(state.step));
  double c2 = 1 - std::pow(AdamState::kBeta2, static_cast<double>(state.step));
  for (auto& [name, p] : params.tensors()) {
    if (p.grad.empty()) continue;
    Tensor& m = state.m[name];
    Tensor& v = state.v[name];
    if (m.empty()) m = Tensor(p.value.channels(), p.value.height(), p.value.width());
    if (v.empty()) v = Tensor(p.value.channels(), p.value.height(), p.value.width());
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      double g = p.grad[i];
      m[i] = AdamState::kBeta1 * m[i] + (1 - AdamState::kBeta1) * g;
      v[i] = AdamState::kBeta2 * v[i] + (1 - AdamState::kBeta2) * g * g;
      p.value[i] -= learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + AdamState::kEpsilon);
    }
  }
}

// ---- checkpoint ----------------------------------------------------------------

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint " + path.string());
  std::size_t records = ckpt.params.tensors().size() + ckpt.optimizer.m.size() + ckpt.optimizer.v.size();
  json meta = {{"format", "finecount-checkpoint"},
               {"version", 1},
               {"arch", ckpt.params.arch().to_json()},
               {"seed", ckpt.params.seed()},
               {"step", ckpt.step},
               {"optimizer_step", ckpt.optimizer.step},
               {"config", ckpt.config.to_json()},
               {"records", records}};
  os << meta.dump() << '\n';
  for (const auto& [name, p] : ckpt.params.tensors())
    write_map_record(os, p.value, {{"name", name}, {"role", "param"}, {"dtype", "f64"}});
  for (const auto& [name, t] : ckpt.optimizer.m)
    write_map_record(os, t, {{"name", name}, {"role", "adam_m"}, {"dtype", "f64"}});
  for (const auto& [name, t] : ckpt.optimizer.v)
    write_map_record(os, t, {{"name", name}, {"role", "adam_v"}, {"dtype", "f64"}});
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint not found: " + path.string());
  std::string line;
  std::getline(is, line);
  json meta;
  try {
    meta = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  if (meta.value("format", std::string()) != "finecount-checkpoint")
    throw DataError(path.string() + " is not a finecount checkpoint");
  Checkpoint c;
  ArchConfig arch = ArchConfig::from_json(meta.at("arch"));
  c.params = build_model(arch, meta.at("seed").get<std::uint64_t>());
  c.step = meta.at("step").get<int>();
  c.optimizer.step = meta.at("optimizer_step").get<long>();
  c.config = TrainConfig::from_json(meta.at("config"));
  std::size_t records = meta.at("records").get<std::size_t>();
  for (std::size_t i = 0; i < records; ++i) {
    json hdr;
    Tensor t = read_map_record(is, &hdr);
    std::string name = hdr.at("name").get<std::string>();
    std::string role = hdr.at("role").get<std::string>();
    if (role == "param") {
      auto& p = c.params.at(name);
      if (!p.value.same_shape(t)) throw DataError("checkpoint tensor '" + name + "' has the wrong shape");
      p.value = std::move(t);
    } else if (role == "adam_m") {
      c.optimizer.m[name] = std::move(t);
    } else if (role == "adam_v") {
      c.optimizer.v[name] = std::move(t);
    } else {
      throw DataError("unknown checkpoint record role '" + role + "'");
    }
  }
  return c;
}

void write_loss_log(const std::filesystem::path& path, const std::vector<LossRow>& rows) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write training log " + path.string());
  os << "step,lc,ls,lf,total\n" << std::setprecision(17);
  for (const auto& r : rows)
    os << r.step << ',' << r.loss.counting << ',' << r.loss.segmentation << ',' << r.loss.fine_grained << ','
       << r.loss.total << '\n';
}

// ---- training ------------------------------------------------------------------

namespace {

int manifest_channels(const std::vector<Tensor>& images) {
  for (const auto& im : images)
    if (im.channels() == 3) return 3;
  return 1;
}

void check_finite(const LossBreakdown& b, int step) {
  auto bad = [&](double v, const char* name) {
    if (!std::isfinite(v))
      throw NumericError("non-finite " + std::string(name) + " loss at step " + std::to_string(step));
  };
  bad(b.counting, "counting");
  bad(b.segmentation, "segmentation");
  bad(b.fine_grained, "fine-grained");
  bad(b.total, "total");
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int step, bool final) {
  if (final) return dir / "checkpoint.ckpt";
  std::ostringstream name;
  name << "checkpoint_step" << std::setw(6) << std::setfill('0') << step << ".ckpt";
  return dir / name.str();
}

}  // namespace

TrainResult train(const DatasetManifest& manifest, const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  if (manifest.samples.empty()) throw DataError("training manifest has no samples");

  std::vector<Tensor> images;
  std::vector<Tensor> densities;
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    Sample s = manifest.load_sample(i);
    densities.push_back(render_density_maps(s.annotation, config.kernel));
    images.push_back(std::move(s.image));
  }

  TrainResult result;
  Checkpoint& ckpt = result.checkpoint;
  ckpt.config = config;
  ckpt.params = build_model(config.arch(manifest.k, manifest_channels(images)), config.seed);

  if (!options.output_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(options.output_dir, ec);
    if (ec) throw DataError("cannot create " + options.output_dir.string() + ": " + ec.message());
  }

  // Sampling stream is distinct from the initialization stream.
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_int_distribution<std::size_t> pick(0, images.size() - 1);
  PropagationSettings settings = config.propagation_settings();

  for (int step = 1; step <= config.steps; ++step) {
    std::size_t idx = pick(rng);
    const Tensor& img = images[idx];
    int y0 = img.height() > config.crop ? std::uniform_int_distribution<int>(0, img.height() - config.crop)(rng) : 0;
    int x0 = img.width() > config.crop ? std::uniform_int_distribution<int>(0, img.width() - config.crop)(rng) : 0;
    Tensor crop = img.crop(y0, x0, config.crop, config.crop);
    GroundTruth gt = make_ground_truth(densities[idx].crop(y0, x0, config.crop, config.crop),
                                       ArchConfig::kOutputStride, config.epsilon, config.eta);

    ckpt.params.zero_grad();
    ad::Graph g;
    ParamBinder binder(g, ckpt.params, true);
    ForwardVars fwd = forward(binder, crop, settings);
    LossVars loss = build_loss(fwd, gt, config.alpha, config.beta);
    check_finite(loss.breakdown, step);
    g.backward(loss.total);
    adam_update(ckpt.params, ckpt.optimizer, config.learning_rate);
    ckpt.step = step;

    LossRow row{step, loss.breakdown};
    result.log.push_back(row);
    if (options.on_step) options.on_step(row);

    if (!options.output_dir.empty() && config.checkpoint_every > 0 && step % config.checkpoint_every == 0 &&
        step != config.steps) {
      auto path = checkpoint_path(options.output_dir, step, false);
      save_checkpoint(ckpt, path);
      result.artifacts.push_back(path);
    }
  }

  if (!options.output_dir.empty()) {
    auto path = checkpoint_path(options.output_dir, config.steps, true);
    save_checkpoint(ckpt, path);
    result.artifacts.push_back(path);
    auto log = options.output_dir / "train_log.csv";
    write_loss_log(log, result.log);
    result.artifacts.push_back(log);
  }
  return result;
}

LossBreakdown evaluate_loss(const ModelParams& params, const TrainConfig& config, const Tensor& image,
                            const Tensor& densities) {
  GroundTruth gt = make_ground_truth(densities, ArchConfig::kOutputStride, config.epsilon, config.eta);
  ad::Graph g;
  ParamBinder binder(g, params);
  ForwardVars fwd = forward(binder, image, config.propagation_settings());
  return build_loss(fwd, gt, config.alpha, config.beta).breakdown;
}

Prediction predict(const ModelParams& params, const TrainConfig& config, const Tensor& image) {
  ForwardOutputs out = full_forward(params, image, config.propagation_settings());
  Prediction p;
  p.density = out.refined_density;
  p.fine_grained = out.fine_grained;
  if (!out.refined_seg.empty()) {
    p.segmentation = out.refined_seg;
  } else {
    p.segmentation = make_segmentation_maps(clamp_min(p.fine_grained, 0.0), config.epsilon, config.eta);
  }
  return p;
}

EvalReport evaluate(const Checkpoint& ckpt, const DatasetManifest& manifest) {
  if (manifest.samples.empty()) throw DataError("evaluation manifest has no samples");
  if (ckpt.params.arch().k != manifest.k)
    throw DataError("checkpoint has K=" + std::to_string(ckpt.params.arch().k) + " but the manifest has K=" +
                    std::to_string(manifest.k));
  std::vector<Tensor> pred_fine, pred_overall, pred_seg, gt_density, gt_seg;
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    Sample s = manifest.load_sample(i);
    Prediction p = predict(ckpt.params, ckpt.config, s.image);
    GroundTruth gt = make_ground_truth(render_density_maps(s.annotation, ckpt.config.kernel),
                                       ArchConfig::kOutputStride, ckpt.config.epsilon, ckpt.config.eta);
    pred_fine.push_back(std::move(p.fine_grained));
    pred_overall.push_back(std::move(p.density));
    pred_seg.push_back(std::move(p.segmentation));
    gt_density.push_back(std::move(gt.density));
    gt_seg.push_back(std::move(gt.segmentation));
  }
  EvalReport r;
  r.n_images = manifest.samples.size();
  r.mae_per_category = mae_per_category(pred_fine, gt_density);
  r.cmae = cmae(r.mae_per_category);
  r.omae = omae(pred_overall, gt_density);
  SegmentationScores seg = segmentation_metrics(pred_seg, gt_seg);
  r.seg_accuracy = seg.accuracy;
  r.seg_recall_per_category = seg.recall;
  r.warnings = seg.warnings;
  return r;
}

}  // namespace finecount
