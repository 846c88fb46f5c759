#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <string>

#include "advad/baseline.hpp"
#include "advad/data.hpp"
#include "advad/engine.hpp"
#include "advad/error.hpp"
#include "advad/metrics.hpp"
#include "advad/model.hpp"
#include "advad/schedule.hpp"
#include "advad/verify.hpp"

namespace py = pybind11;
using namespace advad;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

ImageTensor to_image(const Array& a) {
  if (a.ndim() != 3) throw Error(ErrorCode::kShapeMismatch, "expected an (H, W, C) array");
  const Shape s{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                static_cast<std::size_t>(a.shape(2))};
  return ImageTensor(s, RangeTag::kByte, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const ImageTensor& img) {
  Array out({img.height(), img.width(), img.channels()});
  std::copy(img.data().begin(), img.data().end(), out.mutable_data());
  return out;
}

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

Precision parse_precision(const std::string& p) {
  if (p == "f64") return Precision::kF64;
  if (p == "f32") return Precision::kF32;
  throw Error(ErrorCode::kInvalidArgument, "precision must be f32 or f64");
}

py::dict result_dict(const AttackResult& r) {
  py::dict d;
  d["method"] = r.method;
  d["label"] = r.label;
  d["x_adv_raw"] = to_array(r.x_adv_raw);
  d["x_adv_quantized"] = to_array(r.x_adv_quantized);
  d["clean_correct"] = r.clean_correct;
  d["success_raw"] = r.success_raw;
  d["success_quantized"] = r.success_quantized;
  d["pred_raw"] = r.pred_raw;
  d["pred_quantized"] = r.pred_quantized;
  d["guided_steps"] = r.guided_steps;
  if (r.trace) {
    py::list steps;
    for (const StepRecord& s : r.trace->steps) {
      py::dict e;
      e["t"] = s.t;
      e["p_f"] = s.p_f;
      e["delta_linf"] = s.delta_linf;
      e["skipped"] = s.skipped;
      steps.append(e);
    }
    d["trace"] = steps;
  }
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Diffusion-based imperceptible adversarial attacks on a built-in CNN";

  py::register_exception<Error>(m, "AdvadError", PyExc_RuntimeError);

  py::class_<Schedule>(m, "Schedule")
      .def_static("linear", &Schedule::linear, py::arg("steps"), py::arg("beta_min") = 1e-4,
                  py::arg("beta_max") = 0.02)
      .def_property_readonly("steps", &Schedule::steps)
      .def("alpha", &Schedule::alpha)
      .def("noise_ratio", &Schedule::noise_ratio)
      .def("lam", &Schedule::lambda);

  py::class_<BuiltinCnn>(m, "Model")
      .def_static("load", &load_model, py::arg("path"))
      .def("save", [](const BuiltinCnn& self, const std::string& path) { save_model(self, path); })
      .def_property_readonly("num_classes", &BuiltinCnn::num_classes)
      .def_property_readonly("input_shape",
                             [](const BuiltinCnn& self) {
                               const Shape s = self.input_shape();
                               return py::make_tuple(s.height, s.width, s.channels);
                             })
      .def("logits", [](const BuiltinCnn& self, const Array& x) { return self.forward(to_image(x)); })
      .def("predict", [](const BuiltinCnn& self, const Array& x) { return self.predict(to_image(x)); })
      .def("cam", [](const BuiltinCnn& self, const Array& x, std::size_t label) {
        const Mask mask = *self.cam_mask(to_image(x), label);
        Array out({mask.height, mask.width});
        std::copy(mask.values.begin(), mask.values.end(), out.mutable_data());
        return out;
      });

  m.def(
      "synthetic",
      [](std::size_t classes, std::size_t per_class, std::size_t size, std::uint64_t seed) {
        const Dataset d = gen_synthetic(classes, per_class, size, seed);
        Array images({d.size(), size, size, std::size_t{3}});
        py::array_t<std::int64_t> labels(std::vector<py::ssize_t>{static_cast<py::ssize_t>(d.size())});
        double* dst = images.mutable_data();
        std::int64_t* lab = labels.mutable_data();
        for (std::size_t i = 0; i < d.size(); ++i) {
          std::copy(d.samples[i].image.data().begin(), d.samples[i].image.data().end(), dst + i * size * size * 3);
          lab[i] = static_cast<std::int64_t>(d.samples[i].label);
        }
        return py::make_tuple(images, labels);
      },
      py::arg("classes") = 2, py::arg("per_class") = 50, py::arg("size") = 32, py::arg("seed") = 0,
      "Synthetic texture/blob images in byte range, shape (N, H, W, 3), with labels.");

  m.def(
      "train",
      [](std::size_t classes, std::size_t per_class, std::size_t size, std::uint64_t data_seed, std::size_t epochs,
         std::uint64_t seed) {
        const Split split = split_dataset(gen_synthetic(classes, per_class, size, data_seed), 0.8, data_seed);
        TrainConfig cfg;
        cfg.epochs = epochs;
        cfg.seed = seed;
        TrainResult r = train_reference(split.train, split.test, cfg);
        return py::make_tuple(std::move(r.model), r.test_accuracy);
      },
      py::arg("classes") = 2, py::arg("per_class") = 500, py::arg("size") = 32, py::arg("data_seed") = 0,
      py::arg("epochs") = 12, py::arg("seed") = 0,
      "Train the built-in CNN on the synthetic task; returns (model, test_accuracy).");

  m.def(
      "attack",
      [](const BuiltinCnn& model, const Array& x, std::size_t label, const std::string& mode, double xi,
         std::size_t steps, std::uint64_t seed, const std::string& precision, bool use_cam, bool trace) {
        AttackConfig c;
        c.xi = xi / 255.0;
        c.steps = steps;
        c.seed = seed;
        c.precision = parse_precision(precision);
        c.use_cam = use_cam;
        c.trace = trace;
        if (mode == "advad") {
          c.mode = AttackMode::kAdvad;
        } else if (mode == "advadx") {
          c.mode = AttackMode::kAdvadX;
        } else {
          throw Error(ErrorCode::kInvalidArgument, "mode must be advad or advadx");
        }
        const ImageTensor img = to_image(x);
        AttackResult r;
        {
          py::gil_scoped_release release;
          r = diffusion_attack(model, img, label, c);
        }
        return result_dict(r);
      },
      py::arg("model"), py::arg("image"), py::arg("label"), py::arg("mode") = "advad", py::arg("xi") = 8.0,
      py::arg("steps") = 1000, py::arg("seed") = 0, py::arg("precision") = "f64", py::arg("use_cam") = false,
      py::arg("trace") = false, "Run AdvAD or AdvAD-X on one byte-range image; xi is in byte units.");

  m.def(
      "pgd",
      [](const BuiltinCnn& model, const Array& x, std::size_t label, double xi, std::size_t steps,
         std::uint64_t seed) {
        PgdConfig c;
        c.xi = xi / 255.0;
        c.steps = steps;
        c.seed = seed;
        return result_dict(pgd_attack(model, to_image(x), label, c));
      },
      py::arg("model"), py::arg("image"), py::arg("label"), py::arg("xi") = 8.0, py::arg("steps") = 40,
      py::arg("seed") = 0);

  m.def(
      "verify",
      [](const BuiltinCnn& model, const Array& x, std::size_t label, double xi, std::size_t steps,
         std::uint64_t seed, const std::string& precision) {
        AttackConfig c;
        c.xi = xi / 255.0;
        c.steps = steps;
        c.seed = seed;
        c.precision = parse_precision(precision);
        c.trace = true;
        c.deep_trace = true;
        const AttackResult r = advad_attack(model, to_image(x), label, c);
        return to_py(verify_trace(*r.trace, c.schedule(), c.xi_internal()).to_json());
      },
      py::arg("model"), py::arg("image"), py::arg("label"), py::arg("xi") = 8.0, py::arg("steps") = 100,
      py::arg("seed") = 0, py::arg("precision") = "f64",
      "Run a fully traced AdvAD attack and check every bound; returns the report.");

  m.def("psnr", [](const Array& a, const Array& b) { return psnr(to_image(a), to_image(b)); });
  m.def(
      "ssim", [](const Array& a, const Array& b, std::size_t window) { return ssim(to_image(a), to_image(b), window); },
      py::arg("a"), py::arg("b"), py::arg("window") = 8);
  m.def("l2", [](const Array& a, const Array& b) { return l2_dist(to_image(a), to_image(b)); });
  m.def("linf", [](const Array& a, const Array& b) { return linf_dist(to_image(a), to_image(b)); });
}
