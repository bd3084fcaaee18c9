// Copyright 2026 The DTC Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <torch/torch.h>

#include <random>

#include "dtc/checkpoint.hpp"
#include "dtc/config.hpp"
#include "dtc/dataset.hpp"
#include "dtc/evaluator.hpp"
#include "dtc/metrics.hpp"
#include "dtc/models.hpp"
#include "dtc/scene.hpp"
#include "dtc/service.hpp"
#include "dtc/text.hpp"

namespace py = pybind11;

namespace {

torch::Tensor to_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
  return torch::from_blob(const_cast<double*>(a.data()), {a.shape(0), a.shape(1)}, torch::kFloat64).clone();
}

py::dict region_dict(const dtc::scene::Region& r) {
  py::dict d;
  d["box"] = std::vector<double>{r.box.x1, r.box.y1, r.box.x2, r.box.y2};
  d["caption"] = r.caption;
  return d;
}

// Writes a checkpoint holding untrained networks for the dataset's vocabulary.
void init_checkpoint(const std::string& data_root, const std::string& out, const std::string& preset,
                     std::uint64_t seed) {
  const auto manifest = dtc::data::load_dataset(data_root);
  auto cfg = dtc::preset_config(preset);
  cfg.seed = seed;
  const auto models = dtc::Models::create(cfg, dtc::text::build_vocab(std::span(&manifest, 1)));
  dtc::ckpt::save_checkpoint(out, models.to_checkpoint(0, 0));
}

class Service {
 public:
  explicit Service(const std::string& checkpoint)
      : service_(dtc::Models::from_checkpoint(dtc::ckpt::load_checkpoint(checkpoint))) {}

  py::tuple generate(const std::string& body) {
    dtc::service::HttpResponse r;
    {
      py::gil_scoped_release release;
      r = service_.handle_generate(body);
    }
    return wrap(r);
  }
  py::tuple meta() const { return wrap(service_.handle_meta()); }
  py::tuple health() const { return wrap(service_.handle_health()); }
  std::string model_hash() const { return service_.model_hash(); }

 private:
  static py::tuple wrap(const dtc::service::HttpResponse& r) { return py::make_tuple(r.status, r.body); }
  dtc::service::InferenceService service_;
};

}  // namespace

PYBIND11_MODULE(_dtc, m) {
  m.doc() = "Layout-and-caption conditioned image synthesis on a synthetic shapes world";
  torch::set_num_threads(1);

  m.def(
      "sample_layout",
      [](std::uint64_t seed) {
        const dtc::scene::SceneConfig config;
        const auto scene = dtc::scene::sample_scene(seed, config);
        std::mt19937_64 rng(dtc::scene::derive_seed(seed, 1));
        py::list regions;
        for (const auto& r : dtc::scene::build_layout(scene, rng, config).regions) regions.append(region_dict(r));
        return regions;
      },
      py::arg("seed"), "Regions (box, caption) of the scene sampled from `seed`.");

  m.def(
      "parse_caption",
      [](const std::string& caption) -> py::object {
        const auto parsed = dtc::scene::parse_caption(caption);
        if (!parsed) return py::none();
        return py::int_(parsed->objects.size());
      },
      py::arg("caption"), "Number of objects a caption describes, or None outside the grammar.");

  m.def(
      "build_dataset",
      [](int n, const std::string& out, std::uint64_t seed) {
        const auto manifest = dtc::data::build_dataset(n, out, seed);
        py::dict counts;
        for (auto s : {dtc::data::Split::train, dtc::data::Split::val, dtc::data::Split::test}) {
          counts[py::str(std::string(dtc::data::to_string(s)))] = manifest.records(s).size();
        }
        return counts;
      },
      py::arg("n"), py::arg("out"), py::arg("seed") = 0, "Renders a dataset; returns images per split.");

  m.def(
      "preset_config", [](const std::string& name) { return dtc::preset_config(name).to_text(); },
      py::arg("name"), "Canonical text of a named config preset.");
  m.def(
      "config_hash", [](const std::string& text) { return dtc::hex64(dtc::parse_config(text).hash()); },
      py::arg("text"));

  m.def(
      "frechet_distance",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
        return dtc::eval::frechet_feature_distance(to_tensor(a), to_tensor(b));
      },
      py::arg("a"), py::arg("b"), "Fréchet distance between two feature sets [n, d] and [k, d].");

  m.def("init_checkpoint", &init_checkpoint, py::arg("data_root"), py::arg("out"), py::arg("preset") = "tiny",
        py::arg("seed") = 0);

  m.def(
      "evaluate",
      [](const std::string& checkpoint, const std::string& data_root, const std::string& split, std::uint64_t seed,
         std::int64_t candidates) {
        auto models = dtc::Models::from_checkpoint(dtc::ckpt::load_checkpoint(checkpoint));
        const auto manifest = dtc::data::load_dataset(data_root);
        const auto& cfg = models.config;
        const auto set = dtc::data::load_split(manifest, dtc::data::parse_split(split), models.vocab, cfg.resolution,
                                               static_cast<int>(cfg.max_tokens),
                                               static_cast<int>(cfg.scene_max_tokens));
        return dtc::eval::evaluate(models, set, seed, candidates).to_json().dump();
      },
      py::arg("checkpoint"), py::arg("data_root"), py::arg("split") = "test", py::arg("seed") = 0,
      py::arg("candidates") = 10, "Metrics report as a JSON string.");

  py::class_<Service>(m, "Service")
      .def(py::init<const std::string&>(), py::arg("checkpoint"))
      .def("generate", &Service::generate, py::arg("body"))
      .def("meta", &Service::meta)
      .def("health", &Service::health)
      .def_property_readonly("model_hash", &Service::model_hash);
}
