#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ccpt/alignment.hpp"
#include "ccpt/config.hpp"
#include "ccpt/distill.hpp"
#include "ccpt/error.hpp"
#include "ccpt/eval.hpp"
#include "ccpt/gradcheck.hpp"
#include "ccpt/pipeline.hpp"
#include "ccpt/rehearsal.hpp"

namespace py = pybind11;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

ccpt::Tensor to_tensor(const Array& a) {
  if (a.ndim() != 2) throw ccpt::Error(ccpt::ErrorKind::Shape, "expected a 2-d array");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return ccpt::Tensor({rows, cols}, std::vector<double>(a.data(), a.data() + rows * cols));
}

Array to_array(const ccpt::Tensor& t) {
  Array out({t.rows(), t.cols()});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

double odid_value(const Array& student, const Array& corrected, double temperature) {
  ccpt::Tape tape;
  return ccpt::odid_loss(tape.constant(to_tensor(student)), to_tensor(corrected), temperature).value().item();
}

py::dict kmeans(const Array& points, std::size_t k, std::uint64_t seed) {
  const auto r = ccpt::kmeans(to_tensor(points), k, seed);
  py::dict d;
  d["centroids"] = to_array(r.centroids);
  d["assignments"] = r.assignments;
  d["inertia"] = r.inertia;
  d["iterations"] = r.iterations;
  return d;
}

double macro_auc(const Array& scores, const std::vector<int>& labels) {
  return ccpt::macro_ovr_auc(to_tensor(scores), labels).macro;
}

py::list run_pipeline(const std::string& config_text, const std::string& output_dir) {
  ccpt::RunConfig config = ccpt::parse_config(config_text);
  if (!output_dir.empty()) config.output_dir = output_dir;
  ccpt::Trainer trainer(config);
  trainer.set_write_outputs(!output_dir.empty());
  py::list out;
  for (const auto& r : trainer.run()) {
    py::dict d;
    d["stage"] = r.stage;
    d["modality"] = r.modality;
    d["setting"] = ccpt::to_string(r.setting);
    d["acc"] = r.acc;
    d["auc"] = r.auc;
    d["forgetting"] = r.forgetting ? py::object(py::float_(*r.forgetting)) : py::object(py::none());
    out.append(d);
  }
  return out;
}

std::vector<std::pair<std::string, double>> gradcheck(unsigned seed) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& c : ccpt::run_gradcheck_suite(seed)) out.emplace_back(c.name, c.result.max_relative_error);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Continual contrastive pre-training core";
  py::register_exception<ccpt::Error>(m, "CcptError", PyExc_ValueError);

  m.def("similarity_matrix", [](const Array& i, const Array& t) {
    return to_array(ccpt::similarity_matrix(to_tensor(i), to_tensor(t)));
  }, py::arg("images"), py::arg("texts"));
  m.def("clip_loss", [](const Array& s, double tau) { return ccpt::clip_loss_value(to_tensor(s), tau); },
        py::arg("similarity"), py::arg("temperature"));
  m.def("row_correction", [](const Array& t, const Array& s) {
    return to_array(ccpt::row_correction(to_tensor(t), to_tensor(s)));
  }, py::arg("teacher"), py::arg("student"));
  m.def("odid_loss", &odid_value, py::arg("student"), py::arg("corrected_teacher"),
        py::arg("distill_temperature") = 1.0);
  m.def("kmeans", &kmeans, py::arg("points"), py::arg("k"), py::arg("seed") = 0);
  m.def("mof_select", [](const Array& f, std::size_t q) { return ccpt::mof_select(to_tensor(f), q); },
        py::arg("features"), py::arg("quota"));
  m.def("even_split", &ccpt::even_split, py::arg("capacity"), py::arg("modalities"));
  m.def("macro_ovr_auc", &macro_auc, py::arg("scores"), py::arg("labels"));
  m.def("forgetting_rate", [](double a, double b) { return ccpt::forgetting_rate(a, b); },
        py::arg("metric_at_learning_stage"), py::arg("metric_now"));
  m.def("run_pipeline", &run_pipeline, py::arg("config_text"), py::arg("output_dir") = "",
        "Runs a configuration given as key = value text; returns the metrics records.");
  m.def("gradcheck", &gradcheck, py::arg("seed") = 7);
}
