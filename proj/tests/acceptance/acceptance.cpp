// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "finecount/groundtruth.hpp"
#include "finecount/metrics.hpp"
#include "finecount/network.hpp"
#include "finecount/synthgen.hpp"
#include "finecount/training.hpp"
#include "gradcheck.hpp"

using namespace finecount;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream s;
  s << is.rdbuf();
  return s.str();
}

Tensor random_tensor(int c, int h, int w, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(c, h, w);
  for (auto& v : t.data()) v = d(rng);
  return t;
}

// ---- criteria ---------------------------------------------------------------

Outcome gt_mass(const fs::path&) {
  auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  KernelSpec kernel;  // fixed, sigma 4
  const int side = 128, k = 2;
  double margin = kernel.truncation_radius * kernel.sigma + 1;
  std::uniform_real_distribution<double> pos(margin, side - margin);
  std::uniform_int_distribution<int> count(1, 60), cat(1, k);
  double worst = 0;
  int maps = 0;
  bool ok = true;
  for (int a = 0; a < 100; ++a) {
    DotAnnotation ann;
    ann.height = ann.width = side;
    ann.k = k;
    int n = count(rng);
    for (int i = 0; i < n; ++i) ann.points.push_back({pos(rng), pos(rng), cat(rng)});
    Tensor d = render_density_maps(ann, kernel);
    for (int j = 0; j < k; ++j) {
      double nj = static_cast<double>(ann.count(j + 1));
      double err = std::abs(d.channel_sum(j) - nj);
      ok = ok && err <= 0.01 * nj;
      if (nj > 0) worst = std::max(worst, err / nj);
      ++maps;
    }
  }
  double secs = seconds_since(t0);
  ok = ok && secs < 10;
  return {ok, std::to_string(maps) + " maps, worst relative mass error " + fmt(worst) + " (limit 0.01), " +
                  fmt(secs, 3) + " s (limit 10)"};
}

Outcome soft_seg_oracle(const fs::path&) {
  std::mt19937_64 rng(77);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    int k = std::uniform_int_distribution<int>(1, 4)(rng);
    int h = std::uniform_int_distribution<int>(1, 12)(rng), w = std::uniform_int_distribution<int>(1, 12)(rng);
    double eps = std::uniform_real_distribution<double>(1e-4, 1e-1)(rng);
    double eta = std::uniform_real_distribution<double>(1e-8, 1e-3)(rng);
    Tensor y = random_tensor(k, h, w, rng, 0, 0.05);
    // Zero out some pixels entirely so the background indicator fires.
    std::bernoulli_distribution drop(0.3);
    for (int yy = 0; yy < h; ++yy)
      for (int xx = 0; xx < w; ++xx)
        if (drop(rng))
          for (int j = 0; j < k; ++j) y(j, yy, xx) = 0;
    Tensor s = make_segmentation_maps(y, eps, eta);
    if (s.channels() != k + 1 || s.height() != h || s.width() != w) return {false, "wrong output shape"};
    for (int yy = 0; yy < h; ++yy)
      for (int xx = 0; xx < w; ++xx) {
        double total = 0;
        for (int j = 0; j < k; ++j) total += y(j, yy, xx);
        for (int j = 0; j < k; ++j) worst = std::max(worst, std::abs(s(j, yy, xx) - y(j, yy, xx) / (eta + total)));
        worst = std::max(worst, std::abs(s(k, yy, xx) - (total <= eps ? 1.0 : 0.0)));
      }
  }
  return {worst <= 1e-12, "50 random inputs, max deviation " + fmt(worst) + " (limit 1e-12)"};
}

Outcome metric_arithmetic(const fs::path&) {
  std::vector<double> row{8.79, 7.23};
  double c = cmae(row);
  bool ok = std::abs(c - 8.01) <= 0.005;
  std::mt19937_64 rng(5);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    int n = std::uniform_int_distribution<int>(1, 5)(rng);
    int k = std::uniform_int_distribution<int>(1, 3)(rng);
    int h = std::uniform_int_distribution<int>(1, 6)(rng), w = std::uniform_int_distribution<int>(1, 6)(rng);
    std::vector<Tensor> pf, gf, po, ps, gs;
    std::bernoulli_distribution bg(0.3);
    for (int i = 0; i < n; ++i) {
      pf.push_back(random_tensor(k, h, w, rng, -0.5, 2));
      gf.push_back(random_tensor(k, h, w, rng, 0, 2));
      po.push_back(random_tensor(1, h, w, rng, -0.5, 3));
      ps.push_back(random_tensor(k + 1, h, w, rng, 0, 1));
      Tensor g = random_tensor(k + 1, h, w, rng, 0, 1);
      for (std::size_t p = 0; p < g.plane(); ++p) g.channel(k)[p] = bg(rng) ? 1.0 : 0.0;
      gs.push_back(g);
    }
    std::vector<double> mae(k, 0.0), hit(k, 0), tot(k, 0);
    double om = 0, all_hit = 0, all = 0;
    for (int i = 0; i < n; ++i) {
      double gt_total = 0, pred_total = 0;
      for (int j = 0; j < k; ++j) {
        double sp = 0, sg = 0;
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) sp += pf[i](j, y, x), sg += gf[i](j, y, x);
        mae[j] += std::abs(sp - sg) / n;
        gt_total += sg;
      }
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) pred_total += po[i](0, y, x);
      om += std::abs(gt_total - pred_total) / n;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          if (gs[i](k, y, x) != 0) continue;
          int ga = 0, pa = 0;
          for (int j = 1; j < k; ++j) {
            if (gs[i](j, y, x) > gs[i](ga, y, x)) ga = j;
            if (ps[i](j, y, x) > ps[i](pa, y, x)) pa = j;
          }
          all += 1;
          tot[ga] += 1;
          if (ga == pa) all_hit += 1, hit[ga] += 1;
        }
    }
    double cm = 0;
    for (double m : mae) cm += m / k;
    auto got = mae_per_category(pf, gf);
    for (int j = 0; j < k; ++j) worst = std::max(worst, std::abs(got[j] - mae[j]));
    worst = std::max(worst, std::abs(cmae(got) - cm));
    worst = std::max(worst, std::abs(omae(po, gf) - om));
    auto seg = segmentation_metrics(ps, gs);
    auto cmp = [&](double got_v, double num, double den) {
      if (den == 0) {
        if (!std::isnan(got_v)) worst = INFINITY;
      } else {
        worst = std::max(worst, std::abs(got_v - num / den));
      }
    };
    cmp(seg.accuracy, all_hit, all);
    for (int j = 0; j < k; ++j) cmp(seg.recall[j], hit[j], tot[j]);
  }
  ok = ok && worst <= 1e-9;
  return {ok, "CMAE(8.79, 7.23) = " + fmt(c, 6) + " (target 8.01 +- 0.005); 50 brute-force cases, max deviation " +
                  fmt(worst) + " (limit 1e-9)"};
}

Outcome dampening(const fs::path&) {
  std::mt19937_64 rng(31);
  const double lambda = 0.2, eps = kDefaultEpsilon;
  std::size_t checked = 0;
  bool ok = true;
  for (int trial = 0; trial < 20; ++trial) {
    Tensor y = random_tensor(1, 16, 16, rng, -2 * eps, 3 * eps);
    Tensor w = dampening_matrix(y, lambda, eps);
    for (std::size_t i = 0; i < y.size(); ++i) {
      double expect = std::max(y[i], 0.0) >= eps ? 1.0 : lambda;
      ok = ok && (w[i] == 1.0 || w[i] == lambda) && w[i] == expect;
      ++checked;
    }
  }

  // lambda = 0: module inputs vanish wherever the first-stage density is below epsilon.
  ArchConfig arch;
  arch.iterations = 3;
  std::size_t probes = 0, masked = 0, open = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    ModelParams m = build_model(arch, seed);
    Tensor img = random_tensor(1, 32, 32, rng, 0, 1);
    ad::Graph g;
    ParamBinder b(g, m);
    FirstStage fs = first_stage_forward(b, img);
    const Tensor& dens = fs.density.value();
    // Shift the threshold to the median so both regions are populated.
    std::vector<double> sorted(dens.data().begin(), dens.data().end());
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    PropagationSettings s;
    s.lambda = 0;
    s.epsilon = std::max(sorted[sorted.size() / 2], 1e-9);
    std::vector<int> seen;
    s.probe = [&](int it, const Tensor& input) {
      seen.push_back(it);
      for (int yy = 0; yy < dens.height(); ++yy)
        for (int xx = 0; xx < dens.width(); ++xx) {
          if (std::max(dens(0, yy, xx), 0.0) >= s.epsilon) {
            ++open;
            continue;
          }
          ++masked;
          for (int c = 0; c < input.channels(); ++c) ok = ok && input(c, yy, xx) == 0.0;
        }
      ++probes;
    };
    ad::Graph g2;
    ParamBinder b2(g2, m);
    forward(b2, img, s);
    ok = ok && seen == std::vector<int>{0, 1, 2};
  }
  ok = ok && masked > 0 && open > 0;
  return {ok, std::to_string(checked) + " W_d entries in {1, lambda}; " + std::to_string(probes) +
                  " module inputs probed at lambda=0, " + std::to_string(masked) + " sub-threshold pixels all zero"};
}

Outcome gradient_check(const fs::path&) {
  auto t0 = Clock::now();
  ArchConfig arch;
  arch.widths = Widths{}.halved();
  arch.iterations = 1;
  arch.hourglass_depth = 1;
  ModelParams m = build_model(arch, 2);
  std::mt19937_64 rng(3);
  Tensor img = random_tensor(1, 8, 8, rng, 0, 1);
  DotAnnotation ann{{{2.5, 2.5, 1}, {5.5, 6.5, 2}, {6.5, 1.5, 1}}, 8, 8, 2};
  GroundTruth gt = make_ground_truth(render_density_maps(ann, {}), ArchConfig::kOutputStride);
  auto r = fc_test::model_gradient_check(m, img, gt, {}, 250, 4);
  double secs = seconds_since(t0);
  bool ok = r.entries.size() >= 200 && r.max_rel_error < 1e-3 && secs < 120;
  return {ok, std::to_string(r.entries.size()) + " of " + std::to_string(m.parameter_count()) +
                  " parameters, max relative error " + fmt(r.max_rel_error) + " (limit 1e-3), " + fmt(secs, 3) +
                  " s (limit 120)"};
}

Outcome overfit_run(const fs::path& work) {
  auto t0 = Clock::now();
  auto data = generate_manifest(work / "overfit_data", 5, 1, SpecRanges{}, 1);
  TrainConfig c;  // hourglass, CoAtt, T=3, lambda 0.2, epsilon 1e-3, lr 1e-4
  c.steps = 500;
  c.crop = 128;
  c.kernel.truncation_radius = 3;
  c.seed = 0;
  auto res = train(data.train, c, {work / "overfit_run", {}});
  EvalReport rep = evaluate(res.checkpoint, data.train);
  double first = res.log.front().loss.total, last = res.log.back().loss.total;
  double secs = seconds_since(t0);
  bool ok = rep.cmae < 1.0 && rep.seg_accuracy > 0.9 && last < 0.1 * first && secs < 600;
  return {ok, "train CMAE " + fmt(rep.cmae) + " (limit 1.0), accuracy " + fmt(rep.seg_accuracy) +
                  " (limit 0.9), loss " + fmt(first, 6) + " -> " + fmt(last, 6) + " (ratio " + fmt(last / first) +
                  ", limit 0.1), " + fmt(secs, 4) + " s (limit 600)"};
}

Outcome context_ablation(const fs::path& work) {
  auto t0 = Clock::now();
  auto data = generate_manifest(work / "ablation_data", 60, 20, SpecRanges{}, 7);
  std::map<ModelKind, double> mean;
  std::ostringstream per_seed;
  for (ModelKind kind : {ModelKind::ours, ModelKind::segment, ModelKind::onenet}) {
    per_seed << to_string(kind) << " [";
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      TrainConfig c;
      c.model = kind;
      c.steps = 2000;
      c.crop = 64;
      c.seed = seed;
      auto res = train(data.train, c);
      double v = evaluate(res.checkpoint, data.test).cmae;
      mean[kind] += v / 3;
      per_seed << (seed > 1 ? " " : "") << fmt(v);
    }
    per_seed << "] ";
  }
  double secs = seconds_since(t0);
  bool ok = mean[ModelKind::ours] <= mean[ModelKind::segment] && mean[ModelKind::segment] <= mean[ModelKind::onenet] &&
            secs < 3600;
  return {ok, "mean test CMAE ours " + fmt(mean[ModelKind::ours]) + " <= segment " + fmt(mean[ModelKind::segment]) +
                  " <= onenet " + fmt(mean[ModelKind::onenet]) + "; per seed " + per_seed.str() + "; " +
                  fmt(secs, 4) + " s (limit 3600)"};
}

Outcome determinism(const fs::path& work) {
  SpecRanges r;
  r.height = r.width = 64;
  r.n_queue = {2, 3};
  r.n_walkers = {2, 3};
  r.queue_spacing = {9, 10};
  r.marker_margin = 10;
  auto data = generate_manifest(work / "determinism_data", 4, 2, r, 99);
  TrainConfig c;
  c.steps = 20;
  c.crop = 48;
  c.seed = 5;
  std::string ckpt[2], report[2], log[2];
  for (int run = 0; run < 2; ++run) {
    auto dir = work / ("determinism_run" + std::to_string(run));
    fs::remove_all(dir);
    train(data.train, c, {dir, {}});
    ckpt[run] = slurp(dir / "checkpoint.ckpt");
    log[run] = slurp(dir / "train_log.csv");
    report[run] = evaluate(load_checkpoint(dir / "checkpoint.ckpt"), data.test).to_json().dump();
  }
  bool ok = !ckpt[0].empty() && ckpt[0] == ckpt[1] && log[0] == log[1] && report[0] == report[1];
  return {ok, "checkpoints (" + std::to_string(ckpt[0].size()) + " bytes) " + (ckpt[0] == ckpt[1] ? "identical" : "differ") +
                  ", loss logs " + (log[0] == log[1] ? "identical" : "differ") + ", reports " +
                  (report[0] == report[1] ? "identical" : "differ")};
}

Outcome mixing_identity(const fs::path&) {
  std::mt19937_64 rng(8);
  std::size_t passes = 0, entries = 0;
  bool ok = true;
  auto check = [&](const Tensor& fine, const Tensor& seg, const Tensor& dens) {
    for (int j = 0; j < fine.channels(); ++j)
      for (std::size_t i = 0; i < fine.plane(); ++i) {
        ok = ok && fine.channel(j)[i] == seg.channel(j)[i] * dens.channel(0)[i];
        ++entries;
      }
    ++passes;
  };
  for (Propagation prop : {Propagation::hourglass, Propagation::gcn, Propagation::none})
    for (Attention att : {Attention::coatt, Attention::naive, Attention::none})
      for (int k : {1, 2, 3}) {
        ArchConfig a;
        a.k = k;
        a.propagation = prop;
        a.attention = att;
        a.widths = {8, 8, 16, 8};
        ModelParams m = build_model(a, passes + 1);
        int h = std::uniform_int_distribution<int>(16, 40)(rng), w = std::uniform_int_distribution<int>(16, 40)(rng);
        Tensor img = random_tensor(1, h, w, rng, 0, 1);
        auto out = full_forward(m, img);
        check(out.fine_grained, out.refined_seg, out.refined_density);
        // The trainable path stores the same product.
        ad::Graph g;
        ParamBinder b(g, m, true);
        auto fv = forward(b, img, {});
        check(fv.fine_grained.value(), fv.refined_seg.value(), fv.refined_density.value());
      }
  ArchConfig seg;
  seg.model = ModelKind::segment;
  ModelParams ms = build_model(seg, 9);
  auto out = full_forward(ms, random_tensor(1, 24, 24, rng, 0, 1));
  check(out.fine_grained, out.first_seg, out.first_density);
  return {ok, std::to_string(passes) + " forward passes, " + std::to_string(entries) + " entries bitwise equal"};
}

const std::vector<std::pair<std::string, std::function<Outcome(const fs::path&)>>> kCriteria = {
    {"gt_mass", gt_mass},
    {"soft_seg_oracle", soft_seg_oracle},
    {"metric_arithmetic", metric_arithmetic},
    {"dampening", dampening},
    {"gradient_check", gradient_check},
    {"overfit_run", overfit_run},
    {"context_ablation", context_ablation},
    {"determinism", determinism},
    {"mixing_identity", mixing_identity},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Runs the acceptance criteria"};
  std::vector<std::string> only;
  fs::path workdir = fs::temp_directory_path() / "finecount_acceptance";
  bool list = false;
  app.add_option("--only", only, "Criteria to run (default: all)");
  app.add_option("--workdir", workdir, "Scratch directory for generated data");
  app.add_flag("--list", list, "List criterion names");
  CLI11_PARSE(app, argc, argv);

  if (list) {
    for (const auto& [name, fn] : kCriteria) std::cout << name << '\n';
    return 0;
  }
  for (const auto& name : only) {
    bool known = std::any_of(kCriteria.begin(), kCriteria.end(), [&](const auto& c) { return c.first == name; });
    if (!known) {
      std::cerr << "unknown criterion: " << name << '\n';
      return 1;
    }
  }

  int failed = 0;
  for (const auto& [name, fn] : kCriteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    Outcome o;
    try {
      fs::create_directories(workdir);
      o = fn(workdir);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
