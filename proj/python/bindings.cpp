#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "erzefoz/analysis.hpp"

namespace py = pybind11;
using namespace erzefoz;

namespace {

const Dataset& data() {
    static const Dataset d = builtin_dataset();
    return d;
}

py::dict point_dict(const ZefozPoint& p) {
    py::dict d;
    d["site"] = p.site;
    d["i"] = p.i;
    d["j"] = p.j;
    d["B_mT"] = p.B;
    d["frequency_MHz"] = p.frequency;
    d["S1"] = p.S1;
    d["S2"] = p.S2;
    d["s2_max"] = p.s2_max;
    d["T2_s"] = p.t2;
    d["strength_MHz_per_T"] = p.strength;
    d["zeeman_span_GHz"] = p.zeeman_span_GHz;
    d["iterations"] = p.iterations;
    d["converged"] = p.converged;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Er:YSO hyperfine spectra, ZEFOZ refinement and noise estimates";
    py::register_exception<Error>(m, "ErzefozError", PyExc_RuntimeError);

    m.def("dataset_version", [] { return data().version; });

    m.def(
        "spectrum",
        [](int site, const Vec3& B) {
            auto s = SpinSystem(data().site(site)).spectrum(B);
            std::vector<std::string> labels;
            for (const auto& l : s.labels) labels.push_back(l.str());
            py::dict d;
            d["energies_MHz"] = Eigen::VectorXd(s.energies);
            d["labels"] = labels;
            d["zeeman_span_GHz"] = electron_zeeman_splitting(s);
            return d;
        },
        py::arg("site"), py::arg("B_mT"));

    m.def(
        "transition_frequency",
        [](int site, const Vec3& B, int i, int j) {
            return transition_frequency(SpinSystem(data().site(site)).spectrum(B), i, j);
        },
        py::arg("site"), py::arg("B_mT"), py::arg("i"), py::arg("j"));

    m.def(
        "sensitivity",
        [](int site, const Vec3& B, int i, int j) {
            auto p = sensitivity(data().site(site), B, i, j);
            py::dict d;
            d["S1"] = p.S1;
            d["S2"] = p.S2;
            d["s2_max"] = p.s2_max;
            d["finite_difference"] = p.finite_difference;
            return d;
        },
        py::arg("site"), py::arg("B_mT"), py::arg("i"), py::arg("j"));

    m.def(
        "reference_optimum",
        [](int site) {
            auto r = reference_optimum(site);
            return py::make_tuple(r.i, r.j, r.seed);
        },
        py::arg("site"));

    m.def(
        "refine",
        [](int site, int i, int j, const Vec3& seed, double y_mode_uT, double n_er_ppm) {
            auto model = field_noise(data(), y_mode_uT).model(n_er_ppm);
            auto r = refine_to_zefoz(SpinSystem(data().site(site)), i, j, seed, SearchConfig{}, model);
            auto d = point_dict(r.point);
            d["site"] = site;
            d["status"] = r.status;
            return d;
        },
        py::arg("site"), py::arg("i"), py::arg("j"), py::arg("seed_mT"), py::arg("y_mode_uT") = 4.45,
        py::arg("n_er_ppm") = 10.0);

    m.def(
        "noise_mc",
        [](const std::string& kind, double n_er_ppm, std::size_t samples, std::uint64_t seed, int workers) {
            auto s = noise_settings(data(), 1);
            s.workers = workers;
            FluctuationDistribution r;
            {
                py::gil_scoped_release release;
                r = run_fluctuation_mc(parse_bath_kind(kind), n_er_ppm, samples, seed, s);
            }
            py::dict d;
            d["mode_uT"] = r.mode;
            d["sigma_uT"] = r.mb_sigma;
            d["fwhm_uT"] = r.fwhm;
            d["r_squared"] = r.fit_r_squared;
            d["samples_uT"] = Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(r.samples.data(), r.samples.size()));
            return d;
        },
        py::arg("kind"), py::arg("n_er_ppm") = 0.0, py::arg("samples") = 6000, py::arg("seed") = 1,
        py::arg("workers") = 0);

    m.def(
        "analytic_er_fluctuation",
        [](double n_er_ppm) { return analytic_er_fluctuation(n_er_ppm, data().lattice, data().noise); },
        py::arg("n_er_ppm"));

    m.def(
        "frozen_core",
        [](double dB_y_uT) {
            auto f = frozen_core(dB_y_uT, data().lattice, data().noise);
            py::dict d;
            d["n_ppm"] = f.n_ppm;
            d["radius_A"] = f.radius_A;
            d["y_count"] = f.y_count;
            return d;
        },
        py::arg("dB_y_uT") = 4.45);

    m.def(
        "zero_field_map",
        [](int site, double n_er_ppm, double y_mode_uT) {
            auto z = zero_field_t2_map(SpinSystem(data().site(site)), n_er_ppm, field_noise(data(), y_mode_uT));
            return Eigen::MatrixXd(z.t2);
        },
        py::arg("site"), py::arg("n_er_ppm") = 10.0, py::arg("y_mode_uT") = 4.45);

    m.def(
        "anisotropy_map",
        [](int site, const std::string& tensor, int n_theta, int n_phi) {
            auto a = anisotropy_map(data().site(site), parse_tensor_kind(tensor), n_theta, n_phi);
            py::dict d;
            d["theta_deg"] = a.theta;
            d["phi_deg"] = a.phi;
            d["values"] = a.values;
            d["principal_values"] = a.principal_values;
            return d;
        },
        py::arg("site"), py::arg("tensor"), py::arg("n_theta") = 91, py::arg("n_phi") = 181);
}
