#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dualadapt/costs.hpp"
#include "dualadapt/data.hpp"
#include "dualadapt/density.hpp"
#include "dualadapt/experiment.hpp"
#include "dualadapt/federation.hpp"
#include "dualadapt/losses.hpp"
#include "dualadapt/proxy.hpp"

namespace py = pybind11;
using namespace dualadapt;
using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

namespace {

Tensor to_tensor(const Array& a) {
  if (a.ndim() != 1 && a.ndim() != 2) throw ShapeError("expected a 1-D or 2-D array");
  Shape shape;
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape.push_back(static_cast<std::size_t>(a.shape(i)));
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

nlohmann::json parse(const std::string& s) { return s.empty() ? nlohmann::json::object() : nlohmann::json::parse(s); }

double scalar_loss(const Array& a, const Array& b, bool ce) {
  Tape tape;
  Var x = tape.constant(to_tensor(a)), y = tape.constant(to_tensor(b));
  return (ce ? losses::cross_entropy(x, y) : losses::discrepancy(x, y)).value().item();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Federated multi-target domain adaptation simulator";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<InsufficientDataError>(m, "InsufficientDataError", PyExc_ValueError);
  py::register_exception<experiment::UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  m.def("methods", &experiment::known_methods);

  m.def(
      "run",
      [](const std::string& method, const std::string& train_json, const std::string& benchmark_json, std::uint64_t seed) {
        auto spec_json = parse(benchmark_json);
        const auto spec = spec_json.empty() ? data::default_benchmark_spec() : data::benchmark_spec_from_json(spec_json);
        const auto bench = data::gen_benchmark(spec);
        const auto train = federation::train_config_from_json(parse(train_json));
        std::string report;
        {
          py::gil_scoped_release release;
          report = experiment::run_one(method, train, bench, seed).dump();
        }
        return report;
      },
      py::arg("method"), py::arg("train") = "", py::arg("benchmark") = "", py::arg("seed") = 0,
      "Generate the benchmark, train one method and return the report JSON.");

  m.def(
      "generate",
      [](const std::string& benchmark_json) {
        auto j = parse(benchmark_json);
        const auto b = data::gen_benchmark(j.empty() ? data::default_benchmark_spec() : data::benchmark_spec_from_json(j));
        py::dict out;
        out["source_x"] = to_array(b.source_train.inputs);
        out["source_y"] = *b.source_train.labels;
        py::list targets;
        for (const auto& t : b.targets) {
          py::dict d;
          d["train_x"] = to_array(t.train.inputs);
          d["test_x"] = to_array(t.test.inputs);
          d["test_y"] = *t.test.labels;
          targets.append(d);
        }
        out["targets"] = targets;
        return out;
      },
      py::arg("benchmark") = "");

  m.def("default_benchmark", [](std::uint64_t seed) { return data::to_json(data::default_benchmark_spec(seed)).dump(); },
        py::arg("seed") = 0);

  m.def("cross_entropy", [](const Array& p, const Array& y) { return scalar_loss(p, y, true); });
  m.def("discrepancy", [](const Array& a, const Array& b) { return scalar_loss(a, b, false); });
  m.def("softmax", [](const Array& x) { return to_array(softmax(to_tensor(x))); });
  m.def("mixup_pair", [](const Array& a, const Array& b) { return to_array(proxy::mixup_pair(to_tensor(a), to_tensor(b))); });

  m.def(
      "fit_gmm",
      [](const Array& z, std::size_t num_classes, std::uint64_t seed, double min_energy) {
        density::GmmOptions o;
        o.min_energy = min_energy;
        return density::to_json(density::fit_gmm(to_tensor(z), num_classes, seed, o)).dump();
      },
      py::arg("z"), py::arg("num_classes"), py::arg("seed") = 0, py::arg("min_energy") = 0.8);
  m.def("log_density", [](const std::string& gmm, const Array& z) {
    return density::log_density(density::gmm_from_json(nlohmann::json::parse(gmm)), to_tensor(z));
  });
  m.def("confidence_weights", [](const std::string& gmm, const Array& z) {
    return to_array(density::confidence_weights(density::gmm_from_json(nlohmann::json::parse(gmm)), to_tensor(z)));
  });

  m.def("client_flops", [](const std::string& method, std::uint64_t g, std::uint64_t f, std::uint64_t d) {
    return costs::method_client_flops(costs::method_from_string(method), costs::FlopCosts{g, f, d});
  }, py::arg("method"), py::arg("g"), py::arg("f"), py::arg("d") = 0);
  m.def("communication", [](const std::string& method, std::uint64_t g, std::uint64_t f, std::uint64_t w) {
    const auto c = costs::method_communication(costs::method_from_string(method), costs::ParamCounts{g, f, w, 0});
    return std::pair{c.upload, c.broadcast};
  }, py::arg("method"), py::arg("g"), py::arg("f"), py::arg("w") = 0);
  m.def("cost_table", [](const std::string& arch) { return experiment::cmd_cost(nlohmann::json::parse(arch)); });
}
