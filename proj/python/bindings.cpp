// SPDX-License-Identifier: Apache-2.0
// Python bindings. Configs cross the boundary as JSON text; tensors as numpy
// arrays (copied).
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "easwin/config.hpp"
#include "easwin/verify.hpp"

namespace py = pybind11;
using namespace easwin;
using nlohmann::json;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

template <typename T>
py::array_t<T> to_numpy(const Tensor<T>& t) {
  py::array_t<T> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  if (t.size() > 0) std::memcpy(out.mutable_data(), t.data(), sizeof(T) * static_cast<std::size_t>(t.size()));
  return out;
}

Tensor<float> from_numpy(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  Tensor<float> t(shape);
  if (t.size() > 0) std::memcpy(t.data(), a.data(), sizeof(float) * static_cast<std::size_t>(t.size()));
  return t;
}

py::dict dataset_dict(const Dataset& d) {
  py::dict out;
  out["split"] = d.split;
  out["z"] = to_numpy(d.z);
  out["labels"] = d.labels;
  out["valid_t"] = d.valid_t;
  out["generator"] = d.generator;
  out["generator_names"] = d.generator_names;
  return out;
}

EmbeddingBatch make_batch(const FloatArray& z, std::vector<int> valid_t) {
  if (z.ndim() != 4) throw DimensionError("z must have shape (B, T, S, D_in)");
  EmbeddingBatch b;
  b.z = from_numpy(z);
  if (valid_t.empty()) valid_t.assign(static_cast<std::size_t>(b.batch()), static_cast<int>(b.frames()));
  b.valid_t = std::move(valid_t);
  return b;
}

HeadConfig head_from_text(const std::string& text) {
  return head_config_from_json(text.empty() ? json::object() : json::parse(text));
}

// Float model wrapper that owns the head and exposes named parameters.
class PyModel {
 public:
  PyModel(const std::string& head_json, Index input_dim, std::uint64_t seed)
      : model_(head_from_text(head_json), input_dim, seed) {}
  explicit PyModel(DetectionHead<float> model) : model_(std::move(model)) {}

  py::array_t<float> forward(const FloatArray& z, std::vector<int> valid_t) const {
    NoGradGuard guard;
    return to_numpy(model_.forward(make_batch(z, std::move(valid_t))).value());
  }

  std::vector<std::string> parameter_names() {
    std::vector<std::string> out;
    for (auto* p : model_.parameters()) out.push_back(p->name);
    return out;
  }

  py::array_t<float> get(const std::string& name) { return to_numpy(param(name).var.value()); }

  void set(const std::string& name, const FloatArray& value) {
    Tensor<float>& dst = param(name).var.mutable_value();
    Tensor<float> src = from_numpy(value);
    if (src.shape() != dst.shape()) {
      throw DimensionError("parameter " + name + " has shape " + shape_str(dst.shape()) +
                           ", got " + shape_str(src.shape()));
    }
    dst = std::move(src);
  }

  std::string config_json() const { return to_json(model_.config()).dump(); }

  void save(const std::string& path, std::uint64_t seed, Index epoch) {
    save_checkpoint(path, make_checkpoint(model_, seed, epoch));
  }

 private:
  Parameter<float>& param(const std::string& name) {
    Parameter<float>* p = model_.find(name);
    if (!p) throw ContractError("no parameter named " + name);
    return *p;
  }

  DetectionHead<float> model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Windowed-attention detection head over video embeddings";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", error.ptr());
  py::register_exception<ContractError>(m, "ContractError", error.ptr());
  py::register_exception<NumericError>(m, "NumericError", error.ptr());
  py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", error.ptr());
  auto data_error = py::register_exception<DataError>(m, "DataError", error.ptr());
  py::register_exception<BadMagicError>(m, "BadMagicError", data_error.ptr());
  py::register_exception<BadVersionError>(m, "BadVersionError", data_error.ptr());
  py::register_exception<TruncatedError>(m, "TruncatedError", data_error.ptr());
  py::register_exception<CrcMismatchError>(m, "CrcMismatchError", data_error.ptr());

  m.def("config_keys", &config_keys);
  m.def(
      "default_config", [] { return to_json(RunConfig{}).dump(); },
      "Canonical run config as JSON text.");
  m.def(
      "normalize_config",
      [](const std::string& text) { return to_json(run_config_from_json(json::parse(text))).dump(); },
      "Validates a (partial) run config and returns it with every default filled in.");
  m.def("synthetic_preset", [](const std::string& name) { return to_json(synthetic_preset(name)).dump(); });
  m.def("spec_hash", [](const std::string& spec) { return spec_hash(synthetic_spec_from_json(json::parse(spec))); });

  m.def(
      "generate",
      [](const std::string& spec) {
        const SyntheticData d = generate(synthetic_spec_from_json(json::parse(spec)));
        return py::make_tuple(dataset_dict(d.train), dataset_dict(d.val));
      },
      py::arg("spec") = "{}");

  m.def("encode_embedding_file",
        [](const FloatArray& z, const std::vector<std::uint8_t>& labels) {
          if (z.ndim() != 4) throw DimensionError("z must have shape (n, T, S, D_in)");
          EmbeddingFile f;
          f.n = static_cast<std::uint32_t>(z.shape(0));
          f.frames = static_cast<std::uint32_t>(z.shape(1));
          f.tokens = static_cast<std::uint32_t>(z.shape(2));
          f.dim = static_cast<std::uint32_t>(z.shape(3));
          f.labels = labels;
          f.values.assign(z.data(), z.data() + z.size());
          const auto bytes = encode_embedding_file(f);
          return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
        });
  m.def("decode_embedding_file", [](const py::bytes& raw) {
    const std::string s = raw;
    const EmbeddingFile f = decode_embedding_file(
        std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
    py::array_t<float> z({static_cast<py::ssize_t>(f.n), static_cast<py::ssize_t>(f.frames),
                          static_cast<py::ssize_t>(f.tokens), static_cast<py::ssize_t>(f.dim)});
    if (!f.values.empty()) std::memcpy(z.mutable_data(), f.values.data(), f.values.size() * sizeof(float));
    return py::make_tuple(z, std::vector<int>(f.labels.begin(), f.labels.end()));
  });
  m.def("read_split", [](const std::string& path, const std::string& split) {
    return dataset_dict(read_split(path, split));
  });
  m.def("subsample_indices", &subsample_indices);

  m.def("auc", [](std::vector<double> scores, std::vector<int> labels) { return auc(scores, labels); });
  m.def("evaluate", [](std::vector<double> probs, std::vector<int> labels) {
    return to_json(evaluate(probs, labels)).dump();
  });
  m.def("cosine_lr", &cosine_lr, py::arg("step"), py::arg("total_steps"), py::arg("warmup_steps"),
        py::arg("lr") = 3e-4, py::arg("min_lr") = 1e-6);
  m.def("predict", [](double logit) {
    const Prediction p = predict(logit);
    return py::make_tuple(p.probability, p.label);
  });

  py::class_<PyModel>(m, "Model")
      .def(py::init<const std::string&, Index, std::uint64_t>(), py::arg("head") = "{}",
           py::arg("input_dim"), py::arg("seed") = 0)
      .def_static(
          "load", [](const std::string& path) { return PyModel(model_from_checkpoint(load_checkpoint(path))); })
      .def("forward", &PyModel::forward, py::arg("z"), py::arg("valid_t") = std::vector<int>{})
      .def("parameter_names", &PyModel::parameter_names)
      .def("get", &PyModel::get)
      .def("set", &PyModel::set)
      .def("config", &PyModel::config_json)
      .def("save", &PyModel::save, py::arg("path"), py::arg("seed") = 0, py::arg("epoch") = 0);

  m.def(
      "train",
      [](const std::string& config, const std::string& run_dir) {
        const RunConfig cfg = run_config_from_json(json::parse(config));
        const SyntheticData data = load_datasets(cfg.data);
        TrainOptions opts;
        if (!run_dir.empty()) opts.run_dir = run_dir;
        TrainSummary s;
        {
          py::gil_scoped_release release;
          s = train(data.train, data.val, cfg.head, cfg.train, opts);
        }
        return to_json(s).dump();
      },
      py::arg("config"), py::arg("run_dir") = "");

  m.def(
      "gradcheck",
      [](const std::string& config) {
        const RunConfig cfg = run_config_from_json(json::parse(config));
        return to_json(run_gradcheck(cfg.gradcheck)).dump();
      },
      py::arg("config") = "{}");
  m.def(
      "bench",
      [](const std::string& config) {
        const RunConfig cfg = run_config_from_json(json::parse(config));
        return to_json(run_bench(cfg.bench)).dump();
      },
      py::arg("config") = "{}");
}
