#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "daf/commands.hpp"
#include "daf/error.hpp"
#include "daf/metrics.hpp"

namespace py = pybind11;
using namespace daf;
using namespace daf::cli;

namespace {

py::object to_py(const nlohmann::ordered_json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

RunConfig config_from(const std::map<std::string, std::string>& settings) { return resolve_config(settings); }

py::dict seed_run(const SeedRun& r) {
  py::dict d;
  d["seed"] = r.seed;
  d["best_epoch"] = r.fit.best_epoch;
  d["best_val_mse"] = r.fit.best_val_mse;
  d["stopped_early"] = r.fit.stopped_early;
  d["epochs"] = r.fit.history.size();
  d["test_metrics"] = to_py(to_json(r.test_metrics));
  d["informative_gate_mean"] = r.informative_gate_mean ? py::cast(*r.informative_gate_mean) : py::none();
  return d;
}

}  // namespace

PYBIND11_MODULE(_daf, m) {
  m.doc() = "Multimodal sentiment regression with dynamic attention fusion.";

  auto base = py::register_exception<Error>(m, "DafError");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());

  m.def(
      "gen_synth",
      [](const std::filesystem::path& out, std::size_t n, double noise, std::array<double, 3> probs,
         std::uint64_t seed, std::array<std::size_t, 3> dims, bool binary) {
        SyntheticSpec spec;
        spec.n_samples = n;
        spec.noise_std = noise;
        spec.modality_probs = probs;
        spec.seed = seed;
        spec.dims = Dims{dims[0], dims[1], dims[2]};
        return cmd_gen_synth(spec, out, binary ? Encoding::kBinary : Encoding::kJsonLines);
      },
      py::arg("out"), py::arg("n") = 300, py::arg("noise") = 0.3,
      py::arg("probs") = std::array<double, 3>{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}, py::arg("seed") = 0,
      py::arg("dims") = std::array<std::size_t, 3>{768, 74, 35}, py::arg("binary") = false,
      "Writes a synthetic dataset directory and returns a summary.");

  m.def(
      "train",
      [](const std::map<std::string, std::string>& settings) {
        std::vector<SeedRun> runs;
        {
          py::gil_scoped_release release;
          runs = cmd_train(config_from(settings));
        }
        py::list out;
        for (const auto& r : runs) out.append(seed_run(r));
        return out;
      },
      py::arg("settings") = std::map<std::string, std::string>{},
      "Trains one model per seed. Settings use the config-file keys, e.g. {'train.lr': '1e-3'}.");

  m.def(
      "evaluate",
      [](const std::filesystem::path& checkpoint, const std::map<std::string, std::string>& settings) {
        EvaluateOutput e;
        {
          py::gil_scoped_release release;
          e = cmd_evaluate(checkpoint, config_from(settings));
        }
        py::list preds;
        for (const auto& p : e.predictions) preds.append(py::make_tuple(p.id, p.predicted, p.label));
        py::dict d;
        d["metrics"] = to_py(to_json(e.metrics));
        d["predictions"] = preds;
        return d;
      },
      py::arg("checkpoint"), py::arg("settings") = std::map<std::string, std::string>{});

  m.def(
      "ablate",
      [](const std::map<std::string, std::string>& settings) {
        AblationResult r;
        {
          py::gil_scoped_release release;
          r = cmd_ablate(config_from(settings));
        }
        py::dict d;
        d["table_markdown"] = r.table_markdown;
        d["table_csv"] = r.table_csv;
        d["comparison_markdown"] = r.comparison_markdown;
        return d;
      },
      py::arg("settings"), "Runs the modality x fusion ablation matrix given by 'ablate.rows' and 'ablate.fusions'.");

  m.def(
      "roc",
      [](const std::filesystem::path& checkpoint, const std::map<std::string, std::string>& settings) {
        const RocOutput r = cmd_roc(checkpoint, config_from(settings));
        py::list pts;
        for (const auto& p : r.roc.points) pts.append(py::make_tuple(p.fpr, p.tpr, p.threshold));
        py::dict d;
        d["auc"] = r.roc.auc;
        d["points"] = pts;
        return d;
      },
      py::arg("checkpoint"), py::arg("settings") = std::map<std::string, std::string>{});

  m.def(
      "gradcheck",
      [](std::vector<std::uint64_t> seeds, std::vector<std::size_t> lengths, double tol) {
        GradcheckConfig gc;
        gc.model.dims = Dims{12, 6, 5};
        gc.model.d_attn = 8;
        gc.model.d_hidden = 8;
        gc.model.encoder_hidden = 4;
        gc.seeds = std::move(seeds);
        gc.lengths = std::move(lengths);
        gc.options.tolerance = tol;
        const GradcheckOutput out = cmd_gradcheck(gc);
        return py::make_tuple(out.passed, out.text);
      },
      py::arg("seeds") = std::vector<std::uint64_t>{0, 1, 2, 3, 4},
      py::arg("lengths") = std::vector<std::size_t>{1, 3, 7}, py::arg("tol") = 1e-4,
      "Finite-difference check of every parameter gradient; returns (passed, report).");

  m.def("mae", [](const std::vector<double>& p, const std::vector<double>& y) { return mae(p, y); });
  m.def("pearson_cc", [](const std::vector<double>& p, const std::vector<double>& y) { return pearson_cc(p, y); });
  m.def("acc7", [](const std::vector<double>& p, const std::vector<double>& y) { return acc7(p, y); });
  m.def("roc_auc", [](const std::vector<double>& s, const std::vector<double>& y) { return roc_auc(s, y).auc; });
  m.def(
      "metrics_report",
      [](const std::vector<double>& p, const std::vector<double>& y) { return to_py(to_json(full_report(p, y))); },
      "MAE, correlation, 7-class and binary accuracy, F1 and ROC-AUC as a dict.");
}
