// Copyright 2026 The previvor Authors
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

// Python bindings. Images cross the boundary as numpy arrays: RGB as
// uint8 (H, W, 3), Lab as float64 (H, W, 3), luminance and masks as (H, W).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "previvor/degrade.hpp"
#include "previvor/errors.hpp"
#include "previvor/image.hpp"
#include "previvor/metrics.hpp"
#include "previvor/pipeline.hpp"
#include "previvor/png_io.hpp"
#include "previvor/prior.hpp"
#include "previvor/run_config.hpp"

namespace py = pybind11;
using namespace previvor;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

RgbImage to_rgb(const U8Array& arr) {
  if (arr.ndim() != 3 || arr.shape(2) != 3) throw DimensionError("expected an RGB array of shape (H, W, 3)");
  const auto h = static_cast<int>(arr.shape(0)), w = static_cast<int>(arr.shape(1));
  return RgbImage(w, h, std::vector<std::uint8_t>(arr.data(), arr.data() + arr.size()));
}

U8Array from_rgb(const RgbImage& img) {
  U8Array out({img.height(), img.width(), 3});
  std::copy(img.pixels().begin(), img.pixels().end(), out.mutable_data());
  return out;
}

LabImage to_lab(const F64Array& arr) {
  if (arr.ndim() != 3 || arr.shape(2) != 3) throw DimensionError("expected a Lab array of shape (H, W, 3)");
  const auto h = static_cast<int>(arr.shape(0)), w = static_cast<int>(arr.shape(1));
  Plane L(h, w), a(h, w), b(h, w);
  const double* p = arr.data();
  for (std::size_t i = 0; i < L.values().size(); ++i) {
    L.values()[i] = p[3 * i];
    a.values()[i] = p[3 * i + 1];
    b.values()[i] = p[3 * i + 2];
  }
  return LabImage(std::move(L), std::move(a), std::move(b));
}

F64Array from_lab(const LabImage& img) {
  F64Array out({img.L().rows(), img.L().cols(), 3});
  double* p = out.mutable_data();
  for (std::size_t i = 0; i < img.L().values().size(); ++i) {
    p[3 * i] = img.L().values()[i];
    p[3 * i + 1] = img.a().values()[i];
    p[3 * i + 2] = img.b().values()[i];
  }
  return out;
}

F64Array from_plane(const Plane& plane) {
  F64Array out({plane.rows(), plane.cols()});
  std::copy(plane.values().begin(), plane.values().end(), out.mutable_data());
  return out;
}

py::array_t<bool> from_mask(const PriorMask& mask) {
  py::array_t<bool> out({mask.rows(), mask.cols()});
  bool* p = out.mutable_data();
  for (std::size_t i = 0; i < mask.values().size(); ++i) p[i] = mask.values()[i] != 0;
  return out;
}

py::object json_to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

}  // namespace

PYBIND11_MODULE(_previvor, m) {
  m.doc() = "Restoration of faded silk paintings";
  py::register_exception<Error>(m, "Error", PyExc_ValueError);

  m.def("read_png", [](const std::filesystem::path& p) { return from_rgb(read_png(p)); }, py::arg("path"));
  m.def("write_png", [](const std::filesystem::path& p, const U8Array& img) { write_png(p, to_rgb(img)); },
        py::arg("path"), py::arg("image"));
  m.def("rgb_to_lab", [](const U8Array& img) { return from_lab(rgb_to_lab(to_rgb(img))); }, py::arg("image"),
        "sRGB (D65) to CIELAB.");
  m.def("lab_to_rgb", [](const F64Array& lab) { return from_rgb(lab_to_rgb(to_lab(lab))); }, py::arg("lab"),
        "CIELAB to sRGB with rounding and clamping.");

  m.def(
      "apply_linear_degradation",
      [](const F64Array& lum, double alpha, double beta) {
        if (lum.ndim() != 2) throw DimensionError("expected a luminance array of shape (H, W)");
        Plane plane(static_cast<int>(lum.shape(0)), static_cast<int>(lum.shape(1)));
        std::copy(lum.data(), lum.data() + lum.size(), plane.values().begin());
        const LuminancePlane out = apply_linear_degradation(LuminancePlane(std::move(plane), LumDomain::non_degraded),
                                                            LinearCurveParams(alpha, beta));
        return from_plane(out.values());
      },
      py::arg("luminance"), py::arg("alpha"), py::arg("beta"),
      "Fades an 8-bit-scale luminance plane with clamp(alpha * L + beta, 0, 255).");

  m.def(
      "compute_prior_mask",
      [](const F64Array& lab, double silk_a, double silk_b, double tau) {
        return from_mask(compute_prior_mask(to_lab(lab), {silk_a, silk_b}, tau));
      },
      py::arg("lab"), py::arg("silk_a"), py::arg("silk_b"), py::arg("tau") = 20.0,
      "Pixels whose chroma lies farther than tau from the silk colour.");
  m.def(
      "extract_prior",
      [](const U8Array& img, double tau) {
        PriorConfig cfg;
        cfg.tau = tau;
        const PriorExtraction ex = extract_color_prior(rgb_to_lab(to_rgb(img)), cfg);
        py::dict out;
        out["silk"] = py::make_tuple(ex.silk.c_silk[0], ex.silk.c_silk[1]);
        out["mask"] = from_mask(ex.mask);
        out["a"] = from_plane(ex.prior.a());
        out["b"] = from_plane(ex.prior.b());
        return out;
      },
      py::arg("image"), py::arg("tau") = 20.0,
      "Estimates the silk colour and returns the masked chroma prior.");

  m.def("psnr", [](const U8Array& a, const U8Array& b) { return metrics::psnr(to_rgb(a), to_rgb(b)); }, py::arg("a"),
        py::arg("b"));
  m.def("ssim", [](const U8Array& a, const U8Array& b) { return metrics::ssim(to_rgb(a), to_rgb(b)); }, py::arg("a"),
        py::arg("b"));
  m.def("colorfulness", [](const U8Array& img) { return metrics::colorfulness(to_rgb(img)); }, py::arg("image"));
  m.def(
      "delta_colorfulness",
      [](const U8Array& a, const U8Array& b) { return metrics::delta_colorfulness(to_rgb(a), to_rgb(b)); },
      py::arg("a"), py::arg("b"));

  m.def("default_config", [] { return json_to_py(RunConfig{}.to_json()); }, "Default run configuration as a dict.");
  m.def(
      "load_config", [](const std::filesystem::path& p) { return json_to_py(load_run_config(p).to_json()); },
      py::arg("path"), "Parses a TOML run configuration over the defaults.");

  m.def(
      "restore",
      [](const U8Array& img, const std::filesystem::path& lumen_ckpt, const std::filesystem::path& hue_ckpt,
         double tau) {
        const RgbImage degraded = to_rgb(img);
        PriorConfig prior;
        prior.tau = tau;
        std::optional<hue::RestoreResult> result;
        {
          py::gil_scoped_release release;
          result.emplace(restore_image(degraded, load_models(lumen_ckpt, hue_ckpt), prior));
        }
        return py::make_tuple(from_rgb(result->rgb), json_to_py(result->side_info()));
      },
      py::arg("image"), py::arg("lumen_checkpoint"), py::arg("hue_checkpoint"), py::arg("tau") = 20.0,
      "Restores one degraded painting; returns (rgb, side_info).");
}
