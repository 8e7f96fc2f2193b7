#include "finecount/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include "finecount/annotations.hpp"
#include "finecount/errors.hpp"
#include "finecount/groundtruth.hpp"
#include "finecount/image_io.hpp"
#include "finecount/map_io.hpp"
#include "finecount/synthgen.hpp"
#include "finecount/training.hpp"
#include "finecount/visualize.hpp"

namespace finecount {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::usage:
      return 1;
    case ErrorKind::data:
      return 2;
    case ErrorKind::numeric:
      return 3;
  }
  return 2;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
}

json read_json_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << std::setw(2) << j << '\n';
}

// Kernel flags shared by make-gt, train and visualize.
struct KernelFlags {
  std::optional<double> sigma;
  std::optional<double> truncation;
  bool adaptive = false;

  void add(CLI::App* app) {
    app->add_option("--sigma", sigma, "Gaussian bandwidth in pixels (fixed kernel)");
    app->add_flag("--adaptive", adaptive, "Geometry-adaptive bandwidths");
    app->add_option("--truncation", truncation, "Kernel support radius in units of sigma");
  }
  KernelSpec apply(KernelSpec k) const {
    if (sigma) k.sigma = *sigma;
    if (truncation) k.truncation_radius = *truncation;
    if (adaptive) k.mode = KernelMode::adaptive;
    k.validate();
    return k;
  }
};

std::string safe_name(const std::string& id) {
  std::string s = id;
  for (auto& c : s)
    if (c == '/' || c == '\\' || c == ' ') c = '_';
  return s;
}

}  // namespace

CommandResult run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fine-grained counting: density, segmentation and propagation"};
  app.require_subcommand(1);
  CommandResult result;
  std::function<void()> action;

  // gen-synth
  auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic queue/walker dataset");
  fs::path gen_out, gen_ranges;
  int n_train = 5, n_test = 2;
  std::uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--n-train", n_train, "Training scenes");
  gen->add_option("--n-test", n_test, "Test scenes");
  gen->add_option("--seed", gen_seed, "Random seed");
  gen->add_option("--ranges", gen_ranges, "JSON file with scene parameter ranges");
  gen->callback([&] {
    action = [&] {
      SpecRanges ranges = gen_ranges.empty() ? SpecRanges{} : SpecRanges::from_json(read_json_file(gen_ranges));
      GeneratedManifests g = generate_manifest(gen_out, n_train, n_test, ranges, gen_seed);
      for (const auto* m : {&g.train, &g.test})
        for (std::size_t i = 0; i < m->samples.size(); ++i) result.artifacts.push_back(m->image_path(i));
      result.artifacts.push_back(g.train_path);
      result.artifacts.push_back(g.test_path);
      out << "wrote " << g.train.samples.size() << " training and " << g.test.samples.size() << " test scenes to "
          << gen_out.string() << '\n';
    };
  });

  // make-gt
  auto* gt = app.add_subcommand("make-gt", "Render density and segmentation maps for a manifest");
  fs::path gt_manifest, gt_out;
  KernelFlags gt_kernel;
  int gt_stride = 1;
  double gt_eps = kDefaultEpsilon, gt_eta = kDefaultEta;
  gt->add_option("--manifest", gt_manifest, "Dataset manifest")->required();
  gt->add_option("--out", gt_out, "Output directory")->required();
  gt_kernel.add(gt);
  gt->add_option("--stride", gt_stride, "Downsampling stride (1 keeps full resolution)");
  gt->add_option("--epsilon", gt_eps, "Background threshold");
  gt->add_option("--eta", gt_eta, "Soft segmentation stabilizer");
  gt->callback([&] {
    action = [&] {
      if (gt_stride < 1) throw UsageError("--stride must be >= 1");
      KernelSpec kernel = gt_kernel.apply({});
      DatasetManifest m = load_manifest(gt_manifest);
      ensure_dir(gt_out);
      for (std::size_t i = 0; i < m.samples.size(); ++i) {
        const auto& e = m.samples[i];
        Tensor dens = render_density_maps(e.annotation, kernel);
        GroundTruth g = make_ground_truth(dens, gt_stride, gt_eps, gt_eta);
        auto dp = gt_out / (safe_name(e.id) + "_density.map");
        auto sp = gt_out / (safe_name(e.id) + "_segmentation.map");
        write_map(dp, g.density);
        write_map(sp, g.segmentation);
        result.artifacts.push_back(dp);
        result.artifacts.push_back(sp);
      }
      out << "wrote ground truth for " << m.samples.size() << " samples to " << gt_out.string() << '\n';
    };
  });

  // train
  auto* tr = app.add_subcommand("train", "Train a model on a manifest");
  fs::path tr_manifest, tr_out, tr_config;
  std::optional<double> lr, lambda, epsilon;
  std::optional<int> steps, iterations, crop, ckpt_every;
  std::optional<std::uint64_t> tr_seed;
  std::optional<std::string> propagation, attention, model;
  KernelFlags tr_kernel;
  int log_every = 50;
  tr->add_option("--manifest", tr_manifest, "Training manifest")->required();
  tr->add_option("--out", tr_out, "Output directory for checkpoints and the loss log")->required();
  tr->add_option("--config", tr_config, "JSON training config; flags override it");
  tr->add_option("--lr", lr, "Learning rate");
  tr->add_option("--steps", steps, "Optimization steps");
  tr->add_option("--lambda", lambda, "Dampening factor for low-density pixels");
  tr->add_option("--epsilon", epsilon, "Density threshold");
  tr->add_option("--iterations", iterations, "Propagation iterations");
  tr->add_option("--propagation", propagation, "hourglass | gcn | none");
  tr->add_option("--attention", attention, "coatt | naive | none");
  tr->add_option("--model", model, "ours | onenet | twonets | segment");
  tr->add_option("--seed", tr_seed, "Random seed");
  tr->add_option("--crop", crop, "Training crop side");
  tr->add_option("--checkpoint-every", ckpt_every, "Intermediate checkpoint period (0 = final only)");
  tr->add_option("--log-every", log_every, "Print the loss every N steps (0 = quiet)");
  tr_kernel.add(tr);
  tr->callback([&] {
    action = [&] {
      TrainConfig c = tr_config.empty() ? TrainConfig{} : TrainConfig::from_json(read_json_file(tr_config));
      if (lr) c.learning_rate = *lr;
      if (steps) c.steps = *steps;
      if (lambda) c.lambda = *lambda;
      if (epsilon) c.epsilon = *epsilon;
      if (iterations) c.iterations = *iterations;
      if (propagation) c.propagation = propagation_from_string(*propagation);
      if (attention) c.attention = attention_from_string(*attention);
      if (model) c.model = model_from_string(*model);
      if (tr_seed) c.seed = *tr_seed;
      if (crop) c.crop = *crop;
      if (ckpt_every) c.checkpoint_every = *ckpt_every;
      c.kernel = tr_kernel.apply(c.kernel);
      c.validate();
      DatasetManifest m = load_manifest(tr_manifest);
      TrainOptions opts;
      opts.output_dir = tr_out;
      opts.on_step = [&](const LossRow& r) {
        if (log_every > 0 && (r.step % log_every == 0 || r.step == 1))
          out << "step " << r.step << "  lc " << r.loss.counting << "  ls " << r.loss.segmentation << "  lf "
              << r.loss.fine_grained << "  total " << r.loss.total << '\n';
      };
      TrainResult res = train(m, c, opts);
      auto cfg = tr_out / "config.json";
      write_json_file(cfg, c.to_json());
      result.artifacts = res.artifacts;
      result.artifacts.push_back(cfg);
      out << "final checkpoint " << (tr_out / "checkpoint.ckpt").string() << '\n';
    };
  });

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
  fs::path ev_ckpt, ev_manifest, ev_out;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
  ev->add_option("--manifest", ev_manifest, "Evaluation manifest")->required();
  ev->add_option("--out", ev_out, "Report JSON path");
  ev->callback([&] {
    action = [&] {
      Checkpoint ck = load_checkpoint(ev_ckpt);
      DatasetManifest m = load_manifest(ev_manifest);
      EvalReport r = evaluate(ck, m);
      out << r.table(m.category_names);
      if (!ev_out.empty()) {
        if (ev_out.has_parent_path()) ensure_dir(ev_out.parent_path());
        write_json_file(ev_out, r.to_json());
        result.artifacts.push_back(ev_out);
      }
      if (r.warnings > 0) err << "warning: " << r.warnings << " metric(s) undefined (no evaluable pixels)\n";
    };
  });

  // predict
  auto* pr = app.add_subcommand("predict", "Run a checkpoint on one image");
  fs::path pr_ckpt, pr_image, pr_out;
  pr->add_option("--checkpoint", pr_ckpt, "Checkpoint file")->required();
  pr->add_option("--image", pr_image, "PNG image")->required();
  pr->add_option("--out", pr_out, "Output directory")->required();
  pr->callback([&] {
    action = [&] {
      Checkpoint ck = load_checkpoint(pr_ckpt);
      Tensor img = read_png(pr_image);
      if (img.channels() != ck.params.arch().in_channels) {
        if (ck.params.arch().in_channels == 3 && img.channels() == 1) {
          Tensor rgb(3, img.height(), img.width());
          for (int c = 0; c < 3; ++c) std::copy(img.data().begin(), img.data().end(), rgb.channel(c).begin());
          img = std::move(rgb);
        } else {
          throw DataError("image has " + std::to_string(img.channels()) + " channels but the model expects " +
                          std::to_string(ck.params.arch().in_channels));
        }
      }
      Prediction p = predict(ck.params, ck.config, img);
      ensure_dir(pr_out);
      std::vector<std::pair<std::string, const Tensor*>> maps = {
          {"density.map", &p.density}, {"segmentation.map", &p.segmentation}, {"fine_grained.map", &p.fine_grained}};
      for (const auto& [name, t] : maps) {
        write_map(pr_out / name, *t);
        result.artifacts.push_back(pr_out / name);
      }
      out << "total count " << p.density.sum();
      for (int j = 0; j < p.fine_grained.channels(); ++j) out << "  category " << j + 1 << ' ' << p.fine_grained.channel_sum(j);
      out << '\n';
    };
  });

  // visualize
  auto* vis = app.add_subcommand("visualize", "Render density, mask and comparison PNGs");
  fs::path vis_manifest, vis_ckpt, vis_out;
  KernelFlags vis_kernel;
  int vis_limit = 0;
  vis->add_option("--manifest", vis_manifest, "Dataset manifest")->required();
  vis->add_option("--checkpoint", vis_ckpt, "Checkpoint for prediction panels");
  vis->add_option("--out", vis_out, "Output directory")->required();
  vis->add_option("--limit", vis_limit, "Render at most N samples (0 = all)");
  vis_kernel.add(vis);
  vis->callback([&] {
    action = [&] {
      DatasetManifest m = load_manifest(vis_manifest);
      std::optional<Checkpoint> ck;
      if (!vis_ckpt.empty()) {
        ck = load_checkpoint(vis_ckpt);
        if (ck->params.arch().k != m.k) throw DataError("checkpoint K does not match the manifest K");
      }
      KernelSpec kernel = vis_kernel.apply(ck ? ck->config.kernel : KernelSpec{});
      double eps = ck ? ck->config.epsilon : kDefaultEpsilon, eta = ck ? ck->config.eta : kDefaultEta;
      ensure_dir(vis_out);
      std::size_t n = vis_limit > 0 ? std::min<std::size_t>(vis_limit, m.samples.size()) : m.samples.size();
      auto emit = [&](const std::string& name, const RgbImage& im) {
        write_png(vis_out / name, im);
        result.artifacts.push_back(vis_out / name);
      };
      for (std::size_t i = 0; i < n; ++i) {
        Sample s = m.load_sample(i);
        std::string id = safe_name(s.id);
        Tensor dens = render_density_maps(s.annotation, kernel);
        Tensor seg = make_segmentation_maps(dens, eps, eta);
        emit(id + "_gt_density.png", density_overlay(s.image, dens));
        emit(id + "_gt_mask.png", segmentation_overlay(s.image, seg));
        if (ck) {
          Prediction p = predict(ck->params, ck->config, s.image);
          emit(id + "_pred_density.png", density_overlay(s.image, p.fine_grained));
          emit(id + "_pred_mask.png", segmentation_overlay(s.image, p.segmentation));
          emit(id + "_panel.png", comparison_panel(s.image, dens, p.fine_grained));
        }
      }
      out << "wrote " << result.artifacts.size() << " images to " << vis_out.string() << '\n';
    };
  });

  // stats
  auto* st = app.add_subcommand("stats", "Dataset statistics and spatial priors");
  fs::path st_manifest, st_out;
  int grid = 32;
  st->add_option("--manifest", st_manifest, "Dataset manifest")->required();
  st->add_option("--out", st_out, "Directory for the spatial maps and the average image");
  st->add_option("--grid", grid, "Side of the spatial probability grid");
  st->callback([&] {
    action = [&] {
      if (grid < 1) throw UsageError("--grid must be >= 1");
      DatasetManifest m = load_manifest(st_manifest);
      StatsReport r = dataset_stats(m);
      out << std::setw(2) << r.to_json() << '\n';
      if (st_out.empty()) return;
      ensure_dir(st_out);
      auto sp = spatial_probability_maps(m, grid, grid);
      for (std::size_t j = 0; j < sp.category_maps.size(); ++j) {
        auto p = st_out / ("spatial_category" + std::to_string(j + 1) + ".map");
        write_map(p, sp.category_maps[j]);
        result.artifacts.push_back(p);
      }
      if (!sp.log_ratio.empty()) {
        write_map(st_out / "log_ratio.map", sp.log_ratio);
        result.artifacts.push_back(st_out / "log_ratio.map");
      }
      int h = static_cast<int>(std::lround(r.avg_height)), w = static_cast<int>(std::lround(r.avg_width));
      write_png(st_out / "average_image.png", average_image(m, h, w));
      result.artifacts.push_back(st_out / "average_image.png");
      write_json_file(st_out / "stats.json", r.to_json());
      result.artifacts.push_back(st_out / "stats.json");
    };
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return result;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return result;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    for (auto* sub : app.get_subcommands()) err << sub->help();
    result.exit_code = 1;
    return result;
  }

  try {
    if (action) action();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    result.exit_code = exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    result.exit_code = 2;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << '\n';
    result.exit_code = 2;
  } catch (const std::bad_alloc&) {
    err << "error: out of memory\n";
    result.exit_code = 3;
  }
  if (result.exit_code != 0) result.artifacts.clear();
  return result;
}

}  // namespace finecount
