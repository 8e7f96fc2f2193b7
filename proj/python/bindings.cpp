#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "finecount/cli.hpp"
#include "finecount/errors.hpp"
#include "finecount/groundtruth.hpp"
#include "finecount/metrics.hpp"
#include "finecount/synthgen.hpp"
#include "finecount/training.hpp"

namespace py = pybind11;
using namespace finecount;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_numpy(const Tensor& t) {
  Array a({t.channels(), t.height(), t.width()});
  std::copy(t.data().begin(), t.data().end(), a.mutable_data());
  return a;
}

// Accepts (H, W) or (C, H, W).
Tensor from_numpy(const Array& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw py::value_error("expected a 2-D or 3-D array");
  int c = a.ndim() == 3 ? static_cast<int>(a.shape(0)) : 1;
  int h = static_cast<int>(a.shape(a.ndim() - 2)), w = static_cast<int>(a.shape(a.ndim() - 1));
  Tensor t(c, h, w);
  std::copy(a.data(), a.data() + t.size(), t.data().begin());
  return t;
}

std::vector<Tensor> from_numpy_list(const std::vector<Array>& arrays) {
  std::vector<Tensor> out;
  for (const auto& a : arrays) out.push_back(from_numpy(a));
  return out;
}

DotAnnotation make_annotation(const std::vector<std::tuple<double, double, int>>& points, int height, int width,
                              int k) {
  DotAnnotation ann;
  ann.height = height;
  ann.width = width;
  ann.k = k;
  for (const auto& [x, y, c] : points) ann.points.push_back({x, y, c});
  ann.validate();
  return ann;
}

KernelSpec make_kernel(double sigma, bool adaptive, double truncation) {
  KernelSpec k;
  k.sigma = sigma;
  k.mode = adaptive ? KernelMode::adaptive : KernelMode::fixed;
  k.truncation_radius = truncation;
  k.validate();
  return k;
}

py::dict prediction_dict(const Prediction& p) {
  py::dict d;
  d["density"] = to_numpy(p.density);
  d["segmentation"] = to_numpy(p.segmentation);
  d["fine_grained"] = to_numpy(p.fine_grained);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Fine-grained crowd counting: ground truth, metrics, training and inference";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<UsageError>(m, "UsageError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  m.def(
      "render_density_maps",
      [](const std::vector<std::tuple<double, double, int>>& points, int height, int width, int k, double sigma,
         bool adaptive, double truncation) {
        return to_numpy(render_density_maps(make_annotation(points, height, width, k),
                                            make_kernel(sigma, adaptive, truncation)));
      },
      py::arg("points"), py::arg("height"), py::arg("width"), py::arg("k"), py::arg("sigma") = 4.0,
      py::arg("adaptive") = false, py::arg("truncation") = 4.0,
      "K x H x W density maps for (x, y, category) dots; category is 1-based.");

  m.def(
      "make_segmentation_maps",
      [](const Array& densities, double epsilon, double eta) {
        return to_numpy(make_segmentation_maps(from_numpy(densities), epsilon, eta));
      },
      py::arg("densities"), py::arg("epsilon") = kDefaultEpsilon, py::arg("eta") = kDefaultEta);

  m.def(
      "downsample_density", [](const Array& map, int stride) { return to_numpy(downsample_density(from_numpy(map), stride)); },
      py::arg("map"), py::arg("stride"));

  m.def(
      "mae_per_category",
      [](const std::vector<Array>& preds, const std::vector<Array>& gts) {
        return mae_per_category(from_numpy_list(preds), from_numpy_list(gts));
      },
      py::arg("preds"), py::arg("gts"));
  m.def("cmae", [](const std::vector<double>& mae) { return cmae(mae); }, py::arg("mae"));
  m.def(
      "omae",
      [](const std::vector<Array>& overall, const std::vector<Array>& gts) {
        return omae(from_numpy_list(overall), from_numpy_list(gts));
      },
      py::arg("pred_overall"), py::arg("gts"));
  m.def(
      "segmentation_metrics",
      [](const std::vector<Array>& preds, const std::vector<Array>& gts) {
        auto s = segmentation_metrics(from_numpy_list(preds), from_numpy_list(gts));
        return py::make_tuple(s.accuracy, s.recall);
      },
      py::arg("pred_seg"), py::arg("gt_seg"), "Returns (accuracy, per-category recall).");

  m.def(
      "generate_scene",
      [](int n_queue, int n_walkers, std::uint64_t seed, int size, double noise_level) {
        SceneSpec s;
        s.height = s.width = size;
        s.marker_x = s.marker_y = size / 2.0;
        s.n_queue = n_queue;
        s.n_walkers = n_walkers;
        s.seed = seed;
        s.noise_level = noise_level;
        Sample out = generate_scene(s);
        std::vector<std::tuple<double, double, int>> pts;
        for (const auto& p : out.annotation.points) pts.emplace_back(p.x, p.y, p.category);
        return py::make_tuple(to_numpy(out.image), pts);
      },
      py::arg("n_queue") = 4, py::arg("n_walkers") = 4, py::arg("seed") = 0, py::arg("size") = 128,
      py::arg("noise_level") = 0.02, "Returns (image, [(x, y, category), ...]).");

  m.def(
      "train",
      [](const std::filesystem::path& manifest, const std::string& config_json, const std::filesystem::path& out_dir) {
        TrainConfig cfg = TrainConfig::from_json(nlohmann::json::parse(config_json.empty() ? "{}" : config_json));
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(load_manifest(manifest), cfg, {out_dir, {}});
        }
        std::vector<double> totals;
        for (const auto& row : r.log) totals.push_back(row.loss.total);
        return totals;
      },
      py::arg("manifest"), py::arg("config_json") = "", py::arg("out_dir") = std::filesystem::path(),
      "Trains on a manifest; returns the per-step total loss. Writes checkpoint.ckpt when out_dir is set.");

  m.def(
      "evaluate",
      [](const std::filesystem::path& checkpoint, const std::filesystem::path& manifest) {
        return evaluate(load_checkpoint(checkpoint), load_manifest(manifest)).to_json().dump();
      },
      py::arg("checkpoint"), py::arg("manifest"), "Evaluation report as a JSON string.");

  m.def(
      "predict",
      [](const std::filesystem::path& checkpoint, const Array& image) {
        Checkpoint c = load_checkpoint(checkpoint);
        return prediction_dict(predict(c.params, c.config, from_numpy(image)));
      },
      py::arg("checkpoint"), py::arg("image"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        CommandResult r = run_cli(args, out, err);
        return py::make_tuple(r.exit_code, out.str(), err.str());
      },
      py::arg("args"), "Runs a CLI subcommand; returns (exit_code, stdout, stderr).");
}
