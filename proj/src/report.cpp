#include "erzefoz/report.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace erzefoz {

namespace fs = std::filesystem;

json OutputMeta::to_json() const {
    return {{"command", command}, {"config_hash", config_hash}, {"seed", seed}, {"dataset_version", dataset_version}};
}

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

OutputWriter::OutputWriter(std::string dir, OutputMeta meta, bool csv, bool json)
    : dir_(std::move(dir)), meta_(std::move(meta)), csv_(csv), json_(json) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec || !fs::is_directory(dir_)) throw Error("io_error", "cannot create output directory '" + dir_ + "'");
}

std::string OutputWriter::path(const std::string& name) const { return (fs::path(dir_) / name).string(); }

void OutputWriter::finish(std::ofstream& out, const std::string& p) {
    out.flush();
    out.close();
    if (out.fail()) throw Error("io_error", "failed to write '" + p + "'");
    written_.push_back(p);
}

namespace {

void meta_comments(std::ostream& os, const OutputMeta& m) {
    os << "# config_hash=" << m.config_hash << "\n";
    os << "# seed=" << m.seed << "\n";
    os << "# dataset_version=" << m.dataset_version << "\n";
    os << "# command=" << m.command << "\n";
}

void csv_line(std::ostream& os, const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) os << (k ? "," : "") << cells[k];
    os << "\n";
}

}  // namespace

std::string OutputWriter::write_csv(const std::string& name, const std::vector<std::string>& header,
                                    const std::vector<std::vector<std::string>>& rows) {
    if (!csv_) return "";
    const auto p = path(name);
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("io_error", "cannot open '" + p + "' for writing");
    meta_comments(out, meta_);
    csv_line(out, header);
    for (const auto& r : rows) csv_line(out, r);
    finish(out, p);
    return p;
}

std::string OutputWriter::write_json(const std::string& name, json body) {
    if (!json_) return "";
    const auto p = path(name);
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("io_error", "cannot open '" + p + "' for writing");
    body["meta"] = meta_.to_json();
    out << body.dump(2) << "\n";
    finish(out, p);
    return p;
}

std::string OutputWriter::write_grid(const std::string& name, const std::vector<std::string>& comments,
                                     const std::vector<std::vector<std::string>>& rows) {
    const auto p = path(name);
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("io_error", "cannot open '" + p + "' for writing");
    meta_comments(out, meta_);
    for (const auto& c : comments) out << "# " << c << "\n";
    for (const auto& r : rows) csv_line(out, r);
    finish(out, p);
    return p;
}

json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json to_json(const Mat3& m) {
    json a = json::array();
    for (int r = 0; r < 3; ++r) a.push_back(json::array({m(r, 0), m(r, 1), m(r, 2)}));
    return a;
}

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

json to_json(const ZefozPoint& p) {
    return {{"site", p.site},
            {"orientation", p.orientation},
            {"i", p.i},
            {"j", p.j},
            {"B_mT", to_json(p.B)},
            {"B_mag_mT", p.B.norm()},
            {"theta_deg", p.B_spherical.theta},
            {"phi_deg", p.B_spherical.phi},
            {"freq_MHz", p.frequency},
            {"S1_GHz_per_mT", to_json(p.S1)},
            {"S1_norm_GHz_per_mT", p.s1_norm},
            {"S2_GHz_per_mT2", to_json(p.S2)},
            {"S2max_GHz_per_mT2", p.s2_max},
            {"T2_s", number_or_null(p.t2)},
            {"strength_MHz_per_T", p.strength},
            {"zeeman_span_GHz", p.zeeman_span_GHz},
            {"iterations", p.iterations},
            {"converged", p.converged},
            {"finite_difference", p.finite_difference},
            {"seed_index", p.seed_index},
            {"partner_neg", p.partner_neg},
            {"partner_c2", p.partner_c2}};
}

ZefozPoint zefoz_point_from_json(const json& j) {
    ZefozPoint p;
    p.site = j.at("site").get<int>();
    p.orientation = j.at("orientation").get<int>();
    p.i = j.at("i").get<int>();
    p.j = j.at("j").get<int>();
    const auto& b = j.at("B_mT");
    p.B = Vec3(b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>());
    p.B_spherical = cartesian_to_spherical(p.B);
    p.frequency = j.at("freq_MHz").get<double>();
    const auto& s1 = j.at("S1_GHz_per_mT");
    p.S1 = Vec3(s1.at(0).get<double>(), s1.at(1).get<double>(), s1.at(2).get<double>());
    const auto& s2 = j.at("S2_GHz_per_mT2");
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) p.S2(r, c) = s2.at(r).at(c).get<double>();
    p.s1_norm = j.at("S1_norm_GHz_per_mT").get<double>();
    p.s2_max = j.at("S2max_GHz_per_mT2").get<double>();
    p.t2 = j.at("T2_s").is_null() ? kUnboundedT2 : j.at("T2_s").get<double>();
    p.strength = j.at("strength_MHz_per_T").get<double>();
    p.zeeman_span_GHz = j.value("zeeman_span_GHz", 0.0);
    p.iterations = j.at("iterations").get<int>();
    p.converged = j.at("converged").get<bool>();
    p.finite_difference = j.value("finite_difference", false);
    p.seed_index = j.value("seed_index", -1);
    p.partner_neg = j.value("partner_neg", -1);
    p.partner_c2 = j.value("partner_c2", -1);
    return p;
}

std::vector<std::string> zefoz_csv_header() {
    return {"site",      "orientation", "i",        "j",           "B_D1_mT",          "B_D2_mT",
            "B_b_mT",    "B_mag_mT",    "theta_deg", "phi_deg",    "freq_MHz",         "S1_GHz_per_mT",
            "S2max_GHz_per_mT2", "T2_s", "strength_MHz_per_T", "iterations", "converged"};
}

std::vector<std::string> zefoz_csv_row(const ZefozPoint& p) {
    return {std::to_string(p.site), std::to_string(p.orientation), std::to_string(p.i), std::to_string(p.j),
            fmt(p.B.x()), fmt(p.B.y()), fmt(p.B.z()), fmt(p.B.norm()), fmt(p.B_spherical.theta),
            fmt(p.B_spherical.phi), fmt(p.frequency), fmt(p.s1_norm), fmt(p.s2_max), fmt(p.t2), fmt(p.strength),
            std::to_string(p.iterations), p.converged ? "1" : "0"};
}

json to_json(const FluctuationDistribution& d) {
    return {{"kind", to_string(d.kind)},
            {"n_er_ppm", d.n_er_ppm},
            {"sigma", d.mb_sigma},
            {"mode", d.mode},
            {"fwhm", d.fwhm},
            {"argmax_mode", d.argmax_mode},
            {"fit_r_squared", d.fit_r_squared},
            {"fit_failed", d.fit_failed},
            {"n_samples", d.n_samples},
            {"seed", d.seed},
            {"bath_radius_A", d.bath_radius_A},
            {"radius_converged", d.radius_converged},
            {"units", {{"sigma", "uT"}, {"mode", "uT"}, {"fwhm", "uT"}, {"bath_radius_A", "angstrom"}}}};
}

json to_json(const GeometryFit& f) {
    return {{"kind", f.kind == FitKind::line ? "line" : "plane"},
            {"vector", to_json(f.vector)},
            {"centroid_mT", to_json(f.centroid)},
            {"rms_residual_mT", f.rms_residual},
            {"inlier_cut_mT", f.inlier_cut},
            {"inlier_fraction", f.inlier_fraction},
            {"second_moments", to_json(f.moments)},
            {"degenerate", f.degenerate},
            {"note", f.note}};
}

}  // namespace erzefoz
