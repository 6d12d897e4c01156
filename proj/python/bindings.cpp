#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "srl/checkpoint.hpp"
#include "srl/cli.hpp"
#include "srl/gradsuite.hpp"
#include "srl/losses.hpp"
#include "srl/metrics.hpp"
#include "srl/wav.hpp"

namespace py = pybind11;
using namespace srl;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

NdArray to_nd(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return NdArray(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_py(const NdArray& a) {
  std::vector<py::ssize_t> shape(a.shape().begin(), a.shape().end());
  Array out(shape);
  std::copy(a.values().begin(), a.values().end(), out.mutable_data());
  return out;
}

dsp::FrameParams frame_params(double sample_rate, std::size_t window, std::size_t hop,
                              std::size_t fft_size) {
  dsp::FrameParams p;
  p.sample_rate = sample_rate;
  p.window_length = window;
  p.hop_length = hop;
  p.fft_size = fft_size;
  p.validate();
  return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Target-speaker separation with speaker representation loss";

  m.def(
      "run",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = cli::run(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one srlsep command line; returns (exit code, stdout, stderr).");

  m.def("mse_loss", [](const Array& a, const Array& b) { return mse_loss(to_nd(a), to_nd(b)); });
  m.def("srl_distance",
        [](const Array& a, const Array& b) { return srl_distance(to_nd(a), to_nd(b)); });
  m.def("srl_objective", &srl_objective, py::arg("beta"), py::arg("d_sr_pos"), py::arg("mse"));
  m.def("triplet_hinge", &triplet_hinge, py::arg("d_sr_pos"), py::arg("d_sr_neg"),
        py::arg("alpha"));
  m.def("triplet_objective", &triplet_objective, py::arg("beta"), py::arg("l_tri"),
        py::arg("mse"));

  m.def(
      "si_sdr",
      [](const Array& estimate, const Array& reference) {
        return si_sdr({estimate.data(), static_cast<std::size_t>(estimate.size())},
                      {reference.data(), static_cast<std::size_t>(reference.size())});
      },
      py::arg("estimate"), py::arg("reference"));

  m.def(
      "stft",
      [](const Array& samples, double sample_rate, std::size_t window, std::size_t hop,
         std::size_t fft_size) {
        dsp::Waveform w{std::vector<double>(samples.data(), samples.data() + samples.size()),
                        sample_rate};
        const auto s = dsp::stft(w, frame_params(sample_rate, window, hop, fft_size));
        return py::make_tuple(to_py(s.magnitude), to_py(s.phase));
      },
      py::arg("samples"), py::arg("sample_rate") = 16000.0, py::arg("window") = 400,
      py::arg("hop") = 160, py::arg("fft_size") = 512);
  m.def(
      "istft",
      [](const Array& magnitude, const Array& phase, double sample_rate, std::size_t window,
         std::size_t hop, std::size_t fft_size) {
        dsp::Spectrogram s{to_nd(magnitude), to_nd(phase),
                           frame_params(sample_rate, window, hop, fft_size)};
        const auto w = dsp::istft(s);
        return Array(static_cast<py::ssize_t>(w.size()), w.samples.data());
      },
      py::arg("magnitude"), py::arg("phase"), py::arg("sample_rate") = 16000.0,
      py::arg("window") = 400, py::arg("hop") = 160, py::arg("fft_size") = 512);

  m.def(
      "read_wav",
      [](const std::string& path) {
        const auto w = read_wav(path);
        return py::make_tuple(Array(static_cast<py::ssize_t>(w.size()), w.samples.data()),
                              w.sample_rate);
      },
      py::arg("path"));
  m.def(
      "write_wav",
      [](const std::string& path, const Array& samples, double sample_rate) {
        write_wav(path, {std::vector<double>(samples.data(), samples.data() + samples.size()),
                         sample_rate});
      },
      py::arg("path"), py::arg("samples"), py::arg("sample_rate"));

  m.def(
      "gradient_suite",
      [](std::uint64_t seed, bool inject_wrong_grad) {
        GradSuiteOptions opts;
        opts.seed = seed;
        opts.inject_wrong_grad = inject_wrong_grad;
        py::list out;
        for (const auto& e : run_gradient_suite(opts)) {
          py::dict d;
          d["component"] = e.component;
          d["max_rel_error"] = e.max_rel_error;
          d["checked"] = e.checked;
          d["passed"] = e.passed;
          out.append(d);
        }
        return out;
      },
      py::arg("seed") = 1, py::arg("inject_wrong_grad") = false);

  py::class_<EncoderModel>(m, "Encoder")
      .def_static(
          "load",
          [](const std::string& path) {
            return freeze(encoder_from_checkpoint(load_checkpoint(path)));
          },
          py::arg("path"))
      .def_property_readonly("dim", &EncoderModel::dim)
      .def(
          "enroll",
          [](const EncoderModel& e, const Array& magnitude) {
            return to_py(enroll(to_nd(magnitude), e));
          },
          py::arg("magnitude"));

  py::class_<SeparatorModel>(m, "Separator")
      .def_static(
          "load",
          [](const std::string& path) { return separator_from_checkpoint(load_checkpoint(path)); },
          py::arg("path"))
      .def(
          "separate",
          [](const SeparatorModel& s, const Array& noisy, const Array& dvector) {
            const auto r = separate(to_nd(noisy), to_nd(dvector), s);
            return py::make_tuple(to_py(r.enhanced), to_py(r.residual), to_py(r.mask));
          },
          py::arg("noisy"), py::arg("dvector"),
          "Returns (enhanced, residual, mask) magnitude grids.");
}
