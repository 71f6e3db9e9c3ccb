#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sf2f/checkpoint.hpp"
#include "sf2f/config.hpp"
#include "sf2f/dataset.hpp"
#include "sf2f/error.hpp"
#include "sf2f/eval.hpp"
#include "sf2f/phantom.hpp"
#include "sf2f/spectral.hpp"
#include "sf2f/volume.hpp"

namespace py = pybind11;
using namespace sf2f;

namespace {

using CArray = py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast>;
using FArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

// [H, W] or [H, W, D] complex array to a grid with depth 1 for 2D input.
ComplexGrid<double> to_grid(const CArray& a) {
    if (a.ndim() != 2 && a.ndim() != 3) throw DimensionError("expected a 2D or 3D array");
    const auto h = static_cast<std::size_t>(a.shape(0));
    const auto w = static_cast<std::size_t>(a.shape(1));
    const auto d = a.ndim() == 3 ? static_cast<std::size_t>(a.shape(2)) : 1;
    ComplexGrid<double> g(h, w, d);
    const std::complex<double>* src = a.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
        g.re[i] = src[i].real();
        g.im[i] = src[i].imag();
    }
    return g;
}

CArray from_grid(const ComplexGrid<double>& g, bool squeeze) {
    std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(g.height), static_cast<py::ssize_t>(g.width)};
    if (!squeeze) shape.push_back(static_cast<py::ssize_t>(g.depth));
    CArray out(shape);
    std::complex<double>* dst = out.mutable_data();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] = {g.re[i], g.im[i]};
    return out;
}

py::dict metrics_dict(const Metrics& m) {
    py::dict d;
    d["acc"] = m.acc;
    d["sen"] = m.sen;
    d["spe"] = m.spe;
    d["pre"] = m.pre;
    d["f1"] = m.f1;
    d["degenerate"] = py::dict(py::arg("sen") = m.sen_degenerate, py::arg("spe") = m.spe_degenerate,
                               py::arg("pre") = m.pre_degenerate, py::arg("f1") = m.f1_degenerate);
    return d;
}

Tensor<float> image_tensor(const FArray& a) {
    if (a.ndim() != 2) throw DimensionError("expected a 2D slice");
    Image img(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    std::copy(a.data(), a.data() + img.size(), img.pixels.begin());
    return to_model_input(img);
}

RunConfig run_config(const std::string& preset, const std::map<std::string, std::string>& overrides) {
    RunConfig cfg;
    if (preset == "toy") {
        cfg = RunConfig::toy();
    } else if (preset == "full") {
        cfg = RunConfig::full_scale();
    } else {
        throw Error("preset must be toy or full");
    }
    cfg.apply(KeyValues(overrides.begin(), overrides.end()));
    cfg.train.majority_vote = cfg.vote;
    cfg.model.validate();
    cfg.train.validate();
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Two-branch spatial and spectral slice classifier";

    // Translators run newest first, so subclasses are registered after the base.
    const auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

    m.def(
        "fft2", [](const CArray& a) { return from_grid(fft2(to_grid(a)), a.ndim() == 2); }, py::arg("grid"),
        "Unnormalized 2D DFT over the first two axes.");
    m.def(
        "ifft2", [](const CArray& a) { return from_grid(ifft2_complex(to_grid(a)), a.ndim() == 2); },
        py::arg("spectrum"), "Inverse of fft2, scaled by 1/(H*W).");

    m.def(
        "metrics",
        [](std::size_t tp, std::size_t fn, std::size_t tn, std::size_t fp) {
            return metrics_dict(metrics(ConfusionMatrix{tp, tn, fp, fn}));
        },
        py::arg("tp"), py::arg("fn"), py::arg("tn"), py::arg("fp"));

    m.def(
        "majority_vote",
        [](const std::vector<int>& labels, const std::vector<double>& p_patient) {
            if (labels.size() != p_patient.size()) throw DimensionError("labels and probabilities differ in length");
            std::vector<SlicePrediction> slices;
            for (std::size_t i = 0; i < labels.size(); ++i) {
                SlicePrediction s;
                s.label = labels[i];
                s.probs = {1.0 - p_patient[i], p_patient[i]};
                slices.push_back(s);
            }
            const VoteResult v = majority_vote(slices);
            py::dict d;
            d["label"] = v.label;
            d["patient_votes"] = v.patient_votes;
            d["control_votes"] = v.control_votes;
            d["tie_rule"] = v.tie_rule;
            return d;
        },
        py::arg("labels"), py::arg("p_patient"));

    m.def(
        "load_volume",
        [](const std::string& path) {
            const Volume v = load_volume(path);
            FArray data({static_cast<py::ssize_t>(v.extents[2]), static_cast<py::ssize_t>(v.extents[1]),
                         static_cast<py::ssize_t>(v.extents[0])});
            std::copy(v.data.begin(), v.data.end(), data.mutable_data());
            py::dict d;
            d["data"] = data;
            d["spacing"] = py::make_tuple(v.spacing[0], v.spacing[1], v.spacing[2]);
            return d;
        },
        py::arg("path"), "Volume as a float32 array indexed [z, y, x] plus voxel spacing (x, y, z).");

    m.def(
        "write_phantom",
        [](const std::string& dir, std::size_t subjects, std::size_t centers, std::uint64_t seed,
           std::array<std::size_t, 3> extents, double noise_std) {
            PhantomOptions opt;
            opt.n_subjects = subjects;
            opt.n_centers = centers;
            opt.seed = seed;
            opt.extents = extents;
            opt.noise_std = noise_std;
            return format_manifest(write_phantom_dataset(opt, dir));
        },
        py::arg("dir"), py::arg("subjects") = 60, py::arg("centers") = 3, py::arg("seed") = 0,
        py::arg("extents") = PhantomOptions{}.extents, py::arg("noise_std") = PhantomOptions{}.noise_std,
        "Writes a synthetic dataset and returns the manifest text.");

    m.def(
        "make_folds",
        [](const std::string& manifest, std::uint64_t seed, std::size_t k) {
            const Manifest mf = read_manifest(manifest);
            return make_folds(subjects_of(mf.rows), seed, k).to_json();
        },
        py::arg("manifest"), py::arg("seed") = 0, py::arg("k") = 5, "Fold plan as JSON text.");

    m.def(
        "run_cv",
        [](const std::string& manifest, const std::string& preset, const std::map<std::string, std::string>& overrides) {
            const RunConfig cfg = run_config(preset, overrides);
            const auto rows = read_manifest(manifest).for_modality(cfg.modality);
            std::vector<SubjectSlices> subjects;
            {
                py::gil_scoped_release release;
                subjects = load_subjects(rows, cfg.slice_lo, cfg.slice_hi,
                                         SliceOptions{cfg.model.image_height, cfg.model.image_width, cfg.train.normalize});
                return run_cv(subjects, cfg).to_json();
            }
        },
        py::arg("manifest"), py::arg("preset") = "toy", py::arg("overrides") = std::map<std::string, std::string>{},
        "Cross-validation report as JSON text.");

    py::class_<Sf2Former<float>>(m, "Model")
        .def(py::init([](const std::string& preset, std::uint64_t seed, const std::map<std::string, std::string>& overrides) {
                 return Sf2Former<float>(run_config(preset, overrides).model, seed);
             }),
             py::arg("preset") = "toy", py::arg("seed") = 0,
             py::arg("overrides") = std::map<std::string, std::string>{})
        .def_static(
            "load", [](const std::string& path) { return std::move(load_checkpoint<float>(path).model); },
            py::arg("path"))
        .def("save", [](const Sf2Former<float>& model, const std::string& path) { save_checkpoint(model, path); },
             py::arg("path"))
        .def_property_readonly("config",
                               [](const Sf2Former<float>& model) { return model.config().to_key_values(); })
        .def_property_readonly("num_parameters",
                               [](const Sf2Former<float>& model) {
                                   std::size_t n = 0;
                                   const auto& store = model.parameters();
                                   for (std::size_t i = 0; i < store.size(); ++i) n += store[i].var.value().size();
                                   return n;
                               })
        .def(
            "predict",
            [](const Sf2Former<float>& model, const FArray& image) {
                const SlicePrediction p = predict_slice(model, image_tensor(image));
                return py::make_tuple(p.label, p.probs[kControl], p.probs[kPatient]);
            },
            py::arg("image"), "Class and (control, patient) probabilities for one normalized slice.");
}
