// Python bindings for the core operations: dataset handling, model
// training, attack generation, game solving, and the full pipeline.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "stratdef/attacks.hpp"
#include "stratdef/data.hpp"
#include "stratdef/error.hpp"
#include "stratdef/eval.hpp"
#include "stratdef/game.hpp"
#include "stratdef/pipeline.hpp"
#include "stratdef/strategy.hpp"
#include "stratdef/zoo.hpp"

namespace py = pybind11;
using namespace stratdef;

namespace {

FeatureVector vector_from_list(const std::vector<int>& bits) {
  std::vector<std::uint8_t> b;
  b.reserve(bits.size());
  for (int v : bits) b.push_back(static_cast<std::uint8_t>(v));
  return FeatureVector::from_bits(std::move(b));
}

std::vector<int> vector_to_list(const FeatureVector& v) {
  return {v.bits().begin(), v.bits().end()};
}

DatasetFormat format_from(const std::string& name) {
  if (name == "sparse-index") return DatasetFormat::SparseIndex;
  if (name == "dense-csv") return DatasetFormat::DenseCsv;
  throw ConfigError("unknown dataset format: " + name);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "StratDef core operations";

  py::register_exception<Error>(m, "StratDefError");

  py::class_<Sample>(m, "Sample")
      .def_property_readonly(
          "bits", [](const Sample& s) { return vector_to_list(s.vector); })
      .def_readonly("label", &Sample::label)
      .def_readonly("id", &Sample::id);

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("phi", [](const Dataset& d) { return d.phi; })
      .def("__len__", [](const Dataset& d) { return d.size(); })
      .def_readonly("samples", &Dataset::samples)
      .def("count_label", &Dataset::count_label);

  py::class_<SplitSpec>(m, "SplitSpec")
      .def_readonly("train", &SplitSpec::train)
      .def_readonly("validation", &SplitSpec::validation)
      .def_readonly("test", &SplitSpec::test);

  py::class_<PerturbationPolicy>(m, "PerturbationPolicy")
      .def_static("allow_all", &PerturbationPolicy::allow_all)
      .def_static("deny_all", &PerturbationPolicy::deny_all)
      .def_static("from_families", &PerturbationPolicy::from_families)
      .def_readonly("may_add", &PerturbationPolicy::may_add)
      .def_readonly("may_remove", &PerturbationPolicy::may_remove);

  m.def("synth_dataset", &synth_dataset, py::arg("phi"),
        py::arg("n_per_class"), py::arg("class_separation"), py::arg("seed"));
  m.def(
      "load_dataset",
      [](const std::filesystem::path& path, const std::string& format) {
        return load_dataset(path, format_from(format));
      },
      py::arg("path"), py::arg("format") = "sparse-index");
  m.def(
      "write_dataset",
      [](const std::filesystem::path& path, const Dataset& d,
         const std::string& format) {
        write_dataset(path, d, format_from(format));
      },
      py::arg("path"), py::arg("dataset"), py::arg("format") = "sparse-index");
  m.def("balance_and_split", &balance_and_split, py::arg("dataset"),
        py::arg("seed"));
  m.def(
      "apply_policy",
      [](const PerturbationPolicy& policy, const std::vector<int>& original,
         const std::vector<int>& perturbed) {
        return vector_to_list(apply_policy(policy, vector_from_list(original),
                                           vector_from_list(perturbed)));
      },
      py::arg("policy"), py::arg("original"), py::arg("perturbed"));

  py::class_<CandidateModel>(m, "Model")
      .def_readonly("id", &CandidateModel::id)
      .def_property_readonly(
          "family",
          [](const CandidateModel& m) { return family_name(m.family); })
      .def_property_readonly("phi",
                             [](const CandidateModel& m) { return m.phi; })
      .def("param_count", &CandidateModel::param_count)
      .def("predict",
           [](const CandidateModel& m, const std::vector<int>& bits) {
             const Prediction p = m.predict(vector_from_list(bits));
             return py::make_tuple(p.label, p.score);
           })
      .def("saliency", [](const CandidateModel& m, const std::vector<int>& x) {
        return m.saliency(vector_from_list(x));
      });

  m.def(
      "train_model",
      [](const std::string& family, const Dataset& data, std::uint64_t seed) {
        return train_model(family_from_name(family), data, ModelHypers{},
                           seed);
      },
      py::arg("family"), py::arg("train_data"), py::arg("seed"));
  m.def("save_model", &save_model, py::arg("path"), py::arg("model"));
  m.def("load_model", &load_model, py::arg("path"));

  m.def(
      "generate_adversarial",
      [](const std::string& attack, const CandidateModel& substitute,
         const Dataset& malware, const PerturbationPolicy& policy,
         int max_flips, int iterations, std::uint64_t seed) {
        AttackSpec spec{attack_from_name(attack), max_flips, iterations, seed};
        AdversarialSet set =
            generate(spec, substitute, malware.samples, policy);
        py::list out;
        for (const AdversarialExample& ex : set.examples) {
          py::dict d;
          d["original_id"] = ex.original_id;
          d["bits"] = vector_to_list(ex.vector);
          py::list flips;
          for (const Flip& f : ex.flips) {
            flips.append(py::make_tuple(f.index, f.add ? "+" : "-"));
          }
          d["flips"] = flips;
          out.append(d);
        }
        return out;
      },
      py::arg("attack"), py::arg("substitute"), py::arg("malware"),
      py::arg("policy"), py::arg("max_flips") = 20, py::arg("iterations") = 5,
      py::arg("seed") = 0);

  m.def(
      "solve_stackelberg",
      [](const std::vector<std::string>& leader_moves,
         const std::vector<py::dict>& follower_types) {
        GameInstance g;
        g.leader_moves = leader_moves;
        for (const py::dict& ft : follower_types) {
          FollowerType t;
          t.name = ft["name"].cast<std::string>();
          t.probability = ft["probability"].cast<double>();
          t.follower_payoff =
              ft["follower_payoff"].cast<std::vector<std::vector<double>>>();
          t.leader_payoff =
              ft["leader_payoff"].cast<std::vector<std::vector<double>>>();
          for (std::size_t i = 0; i < t.follower_payoff.size(); ++i) {
            t.moves.push_back("m" + std::to_string(i));
          }
          g.followers.push_back(std::move(t));
        }
        const GameSolution s = solve_stackelberg(g);
        py::dict out;
        out["strategy"] = s.leader_strategy;
        out["value"] = s.leader_value;
        out["responses"] = s.follower_best_responses;
        return out;
      },
      py::arg("leader_moves"), py::arg("follower_types"));

  m.def("auc_rank", &auc_rank, py::arg("scores"), py::arg("labels"));
  m.def("chi_squared_pvalue", &chi_squared_pvalue, py::arg("statistic"),
        py::arg("df"));

  m.def(
      "run_pipeline",
      [](const std::filesystem::path& config_path,
         const std::vector<std::string>& stages,
         const std::string& out_override) {
        ExperimentConfig cfg = load_config(config_path);
        if (!out_override.empty()) cfg.out_dir = out_override;
        Pipeline p(std::move(cfg));
        p.run(stages);
        return p.out_dir();
      },
      py::arg("config_path"), py::arg("stages") = std::vector<std::string>{"all"},
      py::arg("out") = "");
}
