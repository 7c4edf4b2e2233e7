#include <torch/csrc/utils/pybind.h>
#include <torch/torch.h>

#include <pybind11/stl.h>

#include "bmdg/bmdg.hpp"
#include "bmdg/checkpoint.hpp"
#include "bmdg/config.hpp"
#include "bmdg/errors.hpp"
#include "bmdg/eval.hpp"
#include "bmdg/losses.hpp"
#include "bmdg/miverify.hpp"
#include "bmdg/synthdata.hpp"
#include "bmdg/trainer.hpp"

namespace py = pybind11;
using namespace bmdg;

namespace {

SearchDirection parse_search(const std::string& s) {
    if (s == "v2i") return SearchDirection::v2i;
    if (s == "i2v") return SearchDirection::i2v;
    throw ConfigError("direction must be 'v2i' or 'i2v'");
}

Modality parse_modality(const std::string& s) {
    if (s == "V") return Modality::visible;
    if (s == "I") return Modality::infrared;
    throw ConfigError("modality must be 'V' or 'I'");
}

py::dict retrieval_dict(const RetrievalResult& r) {
    py::dict d;
    d["direction"] = to_string(r.direction);
    d["protocol"] = to_string(r.protocol);
    for (std::size_t k = 0; k < kCmcRanks.size(); ++k) d[("R" + std::to_string(kCmcRanks[k])).c_str()] = r.rank[k];
    d["mAP"] = r.mAP;
    d["queries"] = r.queries_evaluated;
    d["excluded"] = r.queries_excluded;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "C++ core of bmdg";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<PreconditionError>(m, "PreconditionError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    m.attr("DEFAULT_CONFIG") = dump_train_config(TrainConfig{});

    m.def(
        "generate_dataset",
        [](const std::string& out_dir, const std::string& spec_json) {
            auto spec = spec_json.empty() ? DatasetSpec{} : parse_dataset_spec(spec_json);
            py::gil_scoped_release release;
            return generate_dataset(spec, out_dir).path.string();
        },
        py::arg("out_dir"), py::arg("spec_json") = "",
        "Render a synthetic dataset; returns the manifest path.");

    m.def(
        "train",
        [](const std::string& config_json, const std::string& manifest, const std::string& out_dir) {
            auto cfg = parse_train_config(config_json);
            py::gil_scoped_release release;
            auto data = Dataset::load(manifest);
            return bmdg::train(cfg, data, out_dir).string();
        },
        py::arg("config_json"), py::arg("manifest"), py::arg("out_dir"),
        "Train from a JSON config; returns the last checkpoint path.");

    m.def(
        "evaluate",
        [](const std::string& checkpoint, const std::string& manifest, const std::string& direction,
           const std::string& protocol, std::uint64_t seed) {
            EvalOptions opts;
            opts.protocol = protocol == "single" ? Protocol::single_shot : Protocol::multi_shot;
            opts.seed = seed;
            RetrievalResult r;
            {
                py::gil_scoped_release release;
                auto loaded = load_model(checkpoint);
                auto data = Dataset::load(manifest);
                r = evaluate_model(loaded.model, data, parse_search(direction), opts);
            }
            return retrieval_dict(r);
        },
        py::arg("checkpoint"), py::arg("manifest"), py::arg("direction") = "v2i", py::arg("protocol") = "multi",
        py::arg("seed") = 0);

    m.def(
        "embed",
        [](const std::string& checkpoint, const std::string& manifest, const std::string& modality) {
            auto loaded = load_model(checkpoint);
            auto data = Dataset::load(manifest);
            auto set = embed_modality(loaded.model, data, parse_modality(modality));
            return py::make_tuple(set.embeddings, set.labels);
        },
        py::arg("checkpoint"), py::arg("manifest"), py::arg("modality"),
        "Embeddings and identity labels of every image of one modality.");

    m.def(
        "verify_mi",
        [](int trials, std::uint64_t seed) {
            auto s = run_verification(trials, seed);
            py::dict d;
            d["passed"] = s.passed;
            d["trials"] = s.trials;
            d["lower_bound_failures"] = s.lower_bound_failures;
            d["ce_failures"] = s.ce_failures;
            d["xor_gap"] = s.xor_gap;
            d["max_kl_identity_error"] = s.max_kl_identity_error;
            d["report"] = s.report();
            return d;
        },
        py::arg("trials") = 200, py::arg("seed") = 0);

    m.def(
        "mix_prototypes",
        [](const torch::Tensor& own, const torch::Tensor& other, int t, int total_steps, std::uint64_t seed) {
            Rng rng(seed);
            auto r = mix_prototypes(own, other, t, total_steps, rng);
            return py::make_tuple(r.a, r.swapped);
        },
        py::arg("own"), py::arg("other"), py::arg("t"), py::arg("total_steps"), py::arg("seed") = 0,
        "Row-wise prototype exchange; returns (mixed, swapped).");

    m.def("loss_lc", &loss_lc, py::arg("protos"), py::arg("tau") = 0.1);
    m.def("loss_hc", &loss_hc, py::arg("protos"), py::arg("labels"), py::arg("tau") = 0.1);
    m.def("loss_compact", &loss_compact, py::arg("features"), py::arg("masks"), py::arg("protos"));
    m.def("loss_diverse", &loss_diverse, py::arg("masks"));
    m.def("loss_equivariance", &loss_equivariance, py::arg("masks"), py::arg("masks_inverted"));
    m.def("loss_cc", &loss_cc, py::arg("x"), py::arg("x_labels"), py::arg("x2"), py::arg("x2_labels"),
          py::arg("margin") = 0.3);
    m.def("mmd_gap", &mmd_gap, py::arg("features_v"), py::arg("features_i"));
    m.def(
        "project_2d",
        [](const torch::Tensor& x) {
            auto p = project_2d(x);
            return py::make_tuple(p.coords, p.eigenvalues);
        },
        py::arg("embeddings"), "PCA to two coordinates; returns (coords, eigenvalues).");
}
