// erzefoz command-line front end.
#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "erzefoz/analysis.hpp"
#include "erzefoz/config.hpp"
#include "erzefoz/noise_model.hpp"
#include "erzefoz/report.hpp"
#include "erzefoz/spin_model.hpp"
#include "erzefoz/zefoz_search.hpp"

using namespace erzefoz;

namespace {

struct Context {
    std::string command;
    std::string config_path;
    std::map<std::string, std::string> overrides;
    RunConfig cfg;
    Dataset data;
    std::unique_ptr<OutputWriter> out;
};

std::string non_empty(const std::string& v, const std::string& what) {
    if (v.empty()) throw UsageError(what + " must not be empty");
    return v;
}

OutputWriter make_writer(const Context& c) {
    const auto& formats = c.cfg.get("run.formats");
    bool csv = false, json = false;
    std::stringstream ss(formats);
    std::string f;
    while (std::getline(ss, f, ',')) {
        if (f == "csv") csv = true;
        else if (f == "json") json = true;
        else throw UsageError("run.formats accepts csv and json, got '" + f + "'");
    }
    if (!csv && !json) throw UsageError("run.formats selects no output format");
    OutputMeta meta{c.command, c.cfg.hash_hex(), c.cfg.get_uint("run.seed"), c.data.version};
    return OutputWriter(c.cfg.get("run.output_dir"), meta, csv, json);
}

int workers(const Context& c) { return static_cast<int>(c.cfg.get_int("run.workers")); }

// Y-bath mode from the config or, when unset, from a Monte-Carlo run.
double y_mode(const Context& c) {
    double v = c.cfg.get_double("noise.y_mode_uT");
    if (v > 0.0) return v;
    if (v < 0.0) throw UsageError("noise.y_mode_uT must be >= 0");
    auto s = noise_settings(c.data, 1);
    s.workers = workers(c);
    s.histogram_bins = static_cast<int>(c.cfg.get_int("noise.histogram_bins"));
    auto d = run_fluctuation_mc(BathKind::host_Y, 0.0, static_cast<std::size_t>(c.cfg.get_int("noise.samples")),
                                c.cfg.get_uint("run.seed"), s);
    return d.mode;
}

FieldNoise noise_for(const Context& c, double ymode) {
    auto fn = field_noise(c.data, ymode);
    fn.scalarization = c.cfg.scalarization();
    return fn;
}

json noise_json(const FieldNoise& fn, double ppm) {
    auto s = fn.summary(ppm);
    return {{"n_er_ppm", ppm},
            {"y_mode_uT", s.y_mode},
            {"er_mode_uT", s.er_mode},
            {"total_mode_uT", s.total_mode},
            {"sigma_uT", s.sigma},
            {"scalarization", to_string(fn.scalarization)}};
}

double positive(const Context& c, const std::string& key) {
    double v = c.cfg.get_double(key);
    if (!(v > 0.0)) throw UsageError(key + " must be positive");
    return v;
}

int steps(const Context& c, const std::string& key, int min) {
    auto v = c.cfg.get_int(key);
    if (v < min || v > 100000) throw UsageError(key + " must lie in [" + std::to_string(min) + ", 100000]");
    return static_cast<int>(v);
}

// "site1-opt", "site2-opt" or "B,theta,phi" in mT and degrees.
struct Center {
    int site = 2;
    int i = 14, j = 15;
    Vec3 B = Vec3::Zero();
};

Vec3 refine_optimum(const Context& c, const ReferenceOptimum& ref) {
    auto cfg = c.cfg.search_config();
    SpinSystem sys(c.data.site(ref.site));
    auto r = refine_to_zefoz(sys, ref.i, ref.j, ref.seed, cfg, T2Model{});
    if (r.status != "converged")
        throw NumericalError("reference optimum of site " + std::to_string(ref.site) + " did not converge (" +
                             r.status + ")");
    return r.point.B;
}

Center parse_center(const Context& c, const std::string& spec, const std::string& transition_key) {
    Center ctr;
    if (spec == "site1-opt" || spec == "site2-opt") {
        auto ref = reference_optimum(spec == "site1-opt" ? 1 : 2);
        ctr.site = ref.site;
        ctr.i = ref.i;
        ctr.j = ref.j;
        ctr.B = refine_optimum(c, ref);
    } else {
        auto v = parse_list(spec, 3);
        ctr.B = spherical_to_cartesian({v[0], v[1], v[2], false});
        ctr.site = c.cfg.sites().front();
        auto ref = reference_optimum(ctr.site);
        ctr.i = ref.i;
        ctr.j = ref.j;
    }
    const auto& t = c.cfg.get(transition_key);
    if (!t.empty()) std::tie(ctr.i, ctr.j) = parse_transition(t);
    return ctr;
}

// ---------------------------------------------------------------- spectrum

void cmd_spectrum(Context& c) {
    const auto& bs = c.cfg.get("spectrum.B");
    const auto& sph = c.cfg.get("spectrum.sph");
    if (!bs.empty() && !sph.empty()) throw UsageError("give the field either as --B or as --sph, not both");
    Vec3 B = Vec3::Zero();
    if (!bs.empty()) {
        auto v = parse_list(bs, 3);
        B = Vec3(v[0], v[1], v[2]);
    } else if (!sph.empty()) {
        auto v = parse_list(sph, 3);
        if (v[0] < 0.0) throw UsageError("--sph magnitude must be >= 0");
        B = spherical_to_cartesian({v[0], v[1], v[2], false});
    }
    const bool with_transitions = c.cfg.get_bool("spectrum.transitions");
    auto axis = parse_strength_axis(c.cfg.get("model.strength_axis"));

    std::vector<int> orientations;
    for (double o : parse_list(c.cfg.get("spectrum.orientations"))) {
        if (o != 1.0 && o != 2.0) throw UsageError("spectrum.orientations accepts 1 and 2");
        orientations.push_back(static_cast<int>(o));
    }

    std::vector<std::vector<std::string>> levels, trans;
    json sites = json::array();
    for (int site : c.cfg.sites())
        for (int o : orientations) {
            const auto& base = c.data.site(site);
            SpinSystem sys(o == base.orientation ? base : c2_partner(base));
            auto spec = sys.spectrum(B);
            const std::string ss = std::to_string(site), os = std::to_string(o);
            json js = {{"site", site}, {"orientation", o}, {"zeeman_span_GHz", electron_zeeman_splitting(spec)}};
            json lv = json::array();
            std::printf("site %d orientation %d  B = %s mT\n", site, o, format_vec(B).c_str());
            std::printf("  %5s %16s  %s\n", "level", "energy_MHz", "label");
            for (int n = 0; n < kLevels; ++n) {
                const auto& l = spec.labels[n];
                levels.push_back({ss, os, std::to_string(n), fmt(spec.energies[n]), fmt(l.s_z), fmt(l.i_z), l.str()});
                lv.push_back({{"level", n}, {"energy_MHz", spec.energies[n]}, {"S_z", l.s_z}, {"I_z", l.i_z},
                              {"label", l.str()}});
                std::printf("  %5d %16.6f  %s\n", n, spec.energies[n], l.str().c_str());
            }
            js["levels"] = lv;
            if (with_transitions) {
                json jt = json::array();
                std::printf("  %5s %5s %14s %18s\n", "i", "j", "freq_MHz", "strength_MHz_per_T");
                for (int i = 0; i < kLevels; ++i)
                    for (int j = i + 1; j < kLevels; ++j) {
                        double f = transition_frequency(spec, i, j);
                        double s = transition_strength(spec, sys, i, j, axis);
                        trans.push_back({ss, os, std::to_string(i), std::to_string(j), fmt(f), fmt(s)});
                        jt.push_back({{"i", i}, {"j", j}, {"freq_MHz", f}, {"strength_MHz_per_T", s}});
                        std::printf("  %5d %5d %14.4f %18.4f\n", i, j, f, s);
                    }
                js["transitions"] = jt;
            }
            sites.push_back(js);
        }
    c.out->write_csv("spectrum.csv", {"site", "orientation", "level", "energy_MHz", "S_z", "I_z", "label"}, levels);
    if (with_transitions)
        c.out->write_csv("transitions.csv", {"site", "orientation", "i", "j", "freq_MHz", "strength_MHz_per_T"}, trans);
    auto sp = cartesian_to_spherical(B);
    c.out->write_json("spectrum.json", {{"B_mT", to_json(B)},
                                        {"B_spherical", {{"B_mT", sp.B}, {"theta_deg", sp.theta}, {"phi_deg", sp.phi}}},
                                        {"strength_axis", to_string(axis)},
                                        {"sites", sites}});
}

// ---------------------------------------------------------------- noise

void cmd_noise(Context& c) {
    BathKind kind = parse_bath_kind(c.cfg.get("noise.kind"));
    double ppm = c.cfg.get_double("noise.n_er_ppm");
    if (ppm < 0.0) throw UsageError("--ppm must be >= 0");
    auto samples = c.cfg.get_int("noise.samples");
    if (samples < 10) throw UsageError("--samples must be at least 10");
    int site = c.cfg.sites().front();
    auto s = noise_settings(c.data, site);
    s.workers = workers(c);
    s.er_resonant_only = c.cfg.get_bool("noise.er_resonant_only");
    s.histogram_bins = steps(c, "noise.histogram_bins", 5);
    auto d = run_fluctuation_mc(kind, ppm, static_cast<std::size_t>(samples), c.cfg.get_uint("run.seed"), s);

    std::vector<std::vector<std::string>> rows;
    for (std::size_t k = 0; k < d.histogram.counts.size(); ++k)
        rows.push_back({fmt(d.histogram.center(k)), fmt(d.histogram.counts[k])});
    const std::string stem = kind == BathKind::host_Y ? "noise_Y" : "noise_Er";
    c.out->write_csv(stem + ".csv", {"bin_center_uT", "count"}, rows);
    auto j = to_json(d);
    j["site"] = site;
    if (kind == BathKind::dopant_Er)
        j["analytic_mode_uT"] = ppm > 0.0 ? analytic_er_fluctuation(ppm, c.data.lattice, c.data.noise) : 0.0;
    c.out->write_json(stem + ".json", j);
    std::printf("%s  n=%zu  mode=%.4f uT  sigma=%.4f uT  fwhm=%.4f uT  R2=%.3f%s\n", to_string(kind).c_str(),
                d.n_samples, d.mode, d.mb_sigma, d.fwhm, d.fit_r_squared, d.fit_failed ? "  (fit failed)" : "");
}

// ---------------------------------------------------------------- search and table

void print_table(int site, const std::vector<ZefozPoint>& pts, std::size_t top, double cap) {
    std::vector<ZefozPoint> mine;
    for (const auto& p : pts)
        if (p.site == site) mine.push_back(p);
    auto rows = rank_and_tabulate(mine, top, cap);
    std::printf("site %d\n", site);
    std::printf("  %-7s %10s %20s %12s %24s\n", "i-j", "T2_s", "strength_MHz_per_T", "freq_MHz",
                "(B_mT, theta_deg, phi_deg)");
    for (const auto& r : rows)
        std::printf("  %-7s %10.2f %20.4g %12.1f    (%.0f, %.2f, %.2f)\n",
                    (std::to_string(r.i) + "-" + std::to_string(r.j)).c_str(), r.t2, r.strength, r.frequency,
                    r.field.B, r.field.theta, r.field.phi);
    if (rows.empty()) std::printf("  (no converged points within %.0f mT)\n", cap);
}

std::vector<std::vector<std::string>> table_rows(int site, const std::vector<ZefozPoint>& pts, std::size_t top,
                                                 double cap) {
    std::vector<ZefozPoint> mine;
    for (const auto& p : pts)
        if (p.site == site) mine.push_back(p);
    std::vector<std::vector<std::string>> out;
    int rank = 1;
    for (const auto& r : rank_and_tabulate(mine, top, cap))
        out.push_back({std::to_string(site), std::to_string(rank++), std::to_string(r.i), std::to_string(r.j),
                       fmt(r.t2), fmt(r.strength), fmt(r.frequency), fmt(r.field.B), fmt(r.field.theta),
                       fmt(r.field.phi)});
    return out;
}

const std::vector<std::string> kTableHeader = {"site",     "rank",   "i",         "j",       "T2_s",
                                               "strength_MHz_per_T", "freq_MHz", "B_mT", "theta_deg", "phi_deg"};

void cmd_search(Context& c) {
    auto cfg = c.cfg.search_config();
    double ppm = c.cfg.get_double("noise.n_er_ppm");
    if (ppm < 0.0) throw UsageError("noise.n_er_ppm must be >= 0");
    auto fn = noise_for(c, y_mode(c));
    auto model = fn.model(ppm);
    const auto top = static_cast<std::size_t>(std::max<long long>(0, c.cfg.get_int("search.top_n")));

    std::vector<ZefozPoint> all, failures;
    json stats = json::array();
    for (int site : c.cfg.sites()) {
        auto res = run_search(c.data.site(site), cfg, model);
        std::size_t off = all.size();
        for (auto p : res.points) {
            if (p.partner_neg >= 0) p.partner_neg += static_cast<int>(off);
            if (p.partner_c2 >= 0) p.partner_c2 += static_cast<int>(off);
            all.push_back(p);
        }
        failures.insert(failures.end(), res.failures.begin(), res.failures.end());
        json sc = json::object();
        for (const auto& [k, v] : res.stats.status_counts) sc[k] = v;
        stats.push_back({{"site", site},
                         {"seeds", res.stats.seeds},
                         {"runs", res.stats.runs},
                         {"pruned", res.stats.pruned},
                         {"converged_before_dedup", res.stats.converged_before_dedup},
                         {"unique_points", res.points.size()},
                         {"status_counts", sc}});
        std::printf("site %d: %zu runs, %zu converged, %zu unique points, %zu pruned\n", site, res.stats.runs,
                    res.stats.converged_before_dedup, res.points.size(), res.stats.pruned);
        for (const auto& [k, v] : res.stats.status_counts) std::printf("  %-16s %zu\n", k.c_str(), v);
    }
    std::vector<std::vector<std::string>> rows, frows, trows;
    json jp = json::array();
    for (const auto& p : all) {
        rows.push_back(zefoz_csv_row(p));
        jp.push_back(to_json(p));
    }
    for (const auto& p : failures) frows.push_back(zefoz_csv_row(p));
    for (int site : c.cfg.sites()) {
        auto t = table_rows(site, all, top, cfg.field_cap_report_mT);
        trows.insert(trows.end(), t.begin(), t.end());
    }
    c.out->write_csv("zefoz_points.csv", zefoz_csv_header(), rows);
    if (cfg.keep_failures) c.out->write_csv("zefoz_failures.csv", zefoz_csv_header(), frows);
    c.out->write_csv("zefoz_table.csv", kTableHeader, trows);
    c.out->write_json("zefoz_points.json", {{"points", jp},
                                            {"stats", stats},
                                            {"noise", noise_json(fn, ppm)},
                                            {"field_cap_report_mT", cfg.field_cap_report_mT}});
    for (int site : c.cfg.sites()) print_table(site, all, top, cfg.field_cap_report_mT);
}

void cmd_table(Context& c) {
    const auto& path = c.cfg.get("table.input");
    if (path.empty()) throw UsageError("table needs --input <zefoz_points.json>");
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw InvalidParameter("cannot parse '" + path + "': " + e.what());
    }
    std::vector<ZefozPoint> pts;
    try {
        for (const auto& p : j.at("points")) pts.push_back(zefoz_point_from_json(p));
    } catch (const json::exception& e) {
        throw InvalidParameter("malformed point list in '" + path + "': " + e.what());
    }
    double cap = c.cfg.get_double("search.field_cap_report_mT");
    const auto top = static_cast<std::size_t>(std::max<long long>(0, c.cfg.get_int("search.top_n")));
    std::vector<std::vector<std::string>> trows;
    json fits = json::array();
    const auto& fit = c.cfg.get("table.fit");
    for (int site : c.cfg.sites()) {
        auto t = table_rows(site, pts, top, cap);
        trows.insert(trows.end(), t.begin(), t.end());
        print_table(site, pts, top, cap);
        if (!fit.empty()) {
            auto cloud = zefoz_cloud(pts, site, cap);
            auto g = fit_point_cloud(cloud, parse_fit_kind(fit));
            auto jf = to_json(g);
            jf["site"] = site;
            jf["n_points"] = cloud.size();
            fits.push_back(jf);
            std::printf("  %s fit over %zu points: vector (%s), rms %.4g mT, inliers %.3f\n", fit.c_str(),
                        cloud.size(), format_vec(g.vector).c_str(), g.rms_residual, g.inlier_fraction);
        }
    }
    c.out->write_csv("zefoz_table.csv", kTableHeader, trows);
    if (!fit.empty()) c.out->write_json("zefoz_fit.json", {{"fits", fits}, {"input", path}});
}

// ---------------------------------------------------------------- scan

void cmd_scan(Context& c) {
    auto plane = parse_scan_plane(c.cfg.get("scan.plane"));
    auto ctr = parse_center(c, non_empty(c.cfg.get("scan.center"), "scan.center"), "scan.transition");
    double span1 = c.cfg.get_double("scan.span1"), span2 = c.cfg.get_double("scan.span2");
    // Defaults: +-5 mT in magnitude and +-0.05 deg in angle.
    if (span1 == 0.0) span1 = plane == ScanPlane::theta_phi ? 0.05 : 5.0;
    if (span2 == 0.0) span2 = 0.05;
    if (span1 < 0.0 || span2 < 0.0) throw UsageError("scan spans must be positive");
    double ppm = c.cfg.get_double("noise.n_er_ppm");
    auto fn = noise_for(c, y_mode(c));
    SpinSystem sys(c.data.site(ctr.site));
    auto g = tolerance_scan(sys, ctr.i, ctr.j, ctr.B, plane, span1, span2, steps(c, "scan.steps1", 3),
                            steps(c, "scan.steps2", 3), fn.model(ppm), workers(c), c.cfg.sensitivity_options());

    const std::string stem = "scan_" + g.axis1.name + "_" + g.axis2.name;
    const std::string h1 = g.axis1.name + "_" + g.axis1.unit, h2 = g.axis2.name + "_" + g.axis2.unit;
    std::vector<std::vector<std::string>> rows, grid;
    for (int r = 0; r < g.axis1.steps; ++r)
        for (int q = 0; q < g.axis2.steps; ++q) rows.push_back({fmt(g.axis1.value(r)), fmt(g.axis2.value(q)), fmt(g.values(r, q))});
    std::vector<std::string> head = {h1 + "\\" + h2};
    for (int q = 0; q < g.axis2.steps; ++q) head.push_back(fmt(g.axis2.value(q)));
    grid.push_back(head);
    for (int r = 0; r < g.axis1.steps; ++r) {
        std::vector<std::string> line = {fmt(g.axis1.value(r))};
        for (int q = 0; q < g.axis2.steps; ++q) line.push_back(fmt(g.values(r, q)));
        grid.push_back(line);
    }
    c.out->write_csv(stem + ".csv", {h1, h2, "T2_s"}, rows);
    c.out->write_grid(stem + "_grid.csv", {"values T2_s, rows " + h1 + ", columns " + h2}, grid);
    c.out->write_json(stem + ".json",
                      {{"site", ctr.site},
                       {"i", ctr.i},
                       {"j", ctr.j},
                       {"plane", to_string(plane)},
                       {"center", {{"B_mT", g.center.B}, {"theta_deg", g.center.theta}, {"phi_deg", g.center.phi}}},
                       {"axis1", {{"name", g.axis1.name}, {"unit", g.axis1.unit}, {"min", g.axis1.min},
                                  {"max", g.axis1.max}, {"steps", g.axis1.steps}}},
                       {"axis2", {{"name", g.axis2.name}, {"unit", g.axis2.unit}, {"min", g.axis2.min},
                                  {"max", g.axis2.max}, {"steps", g.axis2.steps}}},
                       {"center_T2_s", g.center_t2},
                       {"drop_radius", g.drop_radius},
                       {"drop_found", g.drop_found},
                       {"resolution_warning", g.resolution_warning},
                       {"warning", g.warning},
                       {"noise", noise_json(fn, ppm)}});
    std::printf("site %d (%d,%d) center T2 %.4g s; one-decade drop radius %.5g (%s units)%s\n", ctr.site, ctr.i,
                ctr.j, g.center_t2, g.drop_radius, to_string(plane).c_str(),
                g.warning.empty() ? "" : ("  warning: " + g.warning).c_str());
}

// ---------------------------------------------------------------- map

void cmd_map(Context& c) {
    const auto& kind = c.cfg.get("map.kind");
    if (kind == "zero-field") {
        double ppm = c.cfg.get_double("noise.n_er_ppm");
        if (!(ppm > 0.0)) throw UsageError("zero-field map needs --ppm > 0");
        auto fn = noise_for(c, y_mode(c));
        for (int site : c.cfg.sites()) {
            SpinSystem sys(c.data.site(site));
            auto m = zero_field_t2_map(sys, ppm, fn);
            std::vector<std::vector<std::string>> rows, grid;
            for (int i = 0; i < kLevels; ++i)
                for (int j = i + 1; j < kLevels; ++j)
                    rows.push_back({std::to_string(i), std::to_string(j), fmt(m.frequency(i, j)), fmt(m.t2(i, j))});
            std::vector<std::string> head = {"i\\j"};
            for (int j = 0; j < kLevels; ++j) head.push_back(std::to_string(j));
            grid.push_back(head);
            for (int i = 0; i < kLevels; ++i) {
                std::vector<std::string> line = {std::to_string(i)};
                for (int j = 0; j < kLevels; ++j) line.push_back(fmt(m.t2(i, j)));
                grid.push_back(line);
            }
            const std::string stem = "map_zero_field_site" + std::to_string(site);
            c.out->write_csv(stem + ".csv", {"i", "j", "freq_MHz", "T2_s"}, rows);
            c.out->write_grid(stem + "_grid.csv", {"values T2_s, rows i, columns j, nan below the diagonal"}, grid);
            c.out->write_json(stem + ".json", {{"site", site},
                                               {"entries", rows.size()},
                                               {"min_T2_s", m.min_t2},
                                               {"max_T2_s", m.max_t2},
                                               {"argmin", {m.argmin.first, m.argmin.second}},
                                               {"argmax", {m.argmax.first, m.argmax.second}},
                                               {"finite_difference_pairs", m.finite_difference_pairs},
                                               {"noise", noise_json(fn, ppm)}});
            std::printf("site %d zero-field map: %zu entries, max T2 %.4g s at (%d,%d), min %.4g s at (%d,%d)\n",
                        site, rows.size(), m.max_t2, m.argmax.first, m.argmax.second, m.min_t2, m.argmin.first,
                        m.argmin.second);
        }
    } else if (kind == "anisotropy") {
        auto t = parse_tensor_kind(c.cfg.get("map.tensor"));
        int nt = steps(c, "map.n_theta", 2), np = steps(c, "map.n_phi", 2);
        for (int site : c.cfg.sites()) {
            auto m = anisotropy_map(c.data.site(site), t, nt, np);
            std::vector<std::vector<std::string>> rows, grid;
            for (int a = 0; a < nt; ++a)
                for (int b = 0; b < np; ++b) rows.push_back({fmt(m.theta[a]), fmt(m.phi[b]), fmt(m.values(a, b))});
            std::vector<std::string> head = {"theta_deg\\phi_deg"};
            for (int b = 0; b < np; ++b) head.push_back(fmt(m.phi[b]));
            grid.push_back(head);
            for (int a = 0; a < nt; ++a) {
                std::vector<std::string> line = {fmt(m.theta[a])};
                for (int b = 0; b < np; ++b) line.push_back(fmt(m.values(a, b)));
                grid.push_back(line);
            }
            const std::string unit = t == TensorKind::g_e ? "1" : "MHz";
            const std::string stem = "map_anisotropy_" + to_string(t) + "_site" + std::to_string(site);
            c.out->write_csv(stem + ".csv", {"theta_deg", "phi_deg", "value_" + unit}, rows);
            c.out->write_grid(stem + "_grid.csv", {"equirectangular |M u|, rows theta_deg, columns phi_deg"}, grid);
            c.out->write_json(stem + ".json",
                              {{"site", site},
                               {"tensor", to_string(t)},
                               {"unit", unit},
                               {"max", {{"value", m.max_value}, {"theta_deg", m.max_theta}, {"phi_deg", m.max_phi}}},
                               {"min", {{"value", m.min_value}, {"theta_deg", m.min_theta}, {"phi_deg", m.min_phi}}},
                               {"principal_values", to_json(m.principal_values)}});
            std::printf("site %d %s anisotropy: max %.6g at (%.1f, %.1f), min %.6g at (%.1f, %.1f)\n", site,
                        to_string(t).c_str(), m.max_value, m.max_theta, m.max_phi, m.min_value, m.min_theta,
                        m.min_phi);
        }
    } else {
        throw UsageError("map.kind must be zero-field or anisotropy");
    }
}

// ---------------------------------------------------------------- sweep

void cmd_sweep(Context& c) {
    const auto& mode = c.cfg.get("sweep.mode");
    int site = c.cfg.sites().front();
    auto ref = reference_optimum(site);
    int i = ref.i, j = ref.j;
    if (!c.cfg.get("sweep.transition").empty()) std::tie(i, j) = parse_transition(c.cfg.get("sweep.transition"));
    SpinSystem sys(c.data.site(site));

    if (mode == "field") {
        const auto& dir = c.cfg.get("sweep.direction");
        double theta = 0.0, phi = 0.0, bmax_default = 3000.0;
        if (dir == "opt") {
            auto B = refine_optimum(c, ref);
            auto sp = cartesian_to_spherical(B);
            theta = sp.theta;
            phi = sp.phi;
            bmax_default = 2.0 * sp.B;
        } else {
            auto v = parse_list(dir, 2);
            theta = v[0];
            phi = v[1];
        }
        double bmin = c.cfg.get_double("sweep.B_min_mT"), bmax = c.cfg.get_double("sweep.B_max_mT");
        if (bmax == 0.0) bmax = bmax_default;
        if (bmin < 0.0 || !(bmax > bmin)) throw UsageError("sweep needs 0 <= B_min_mT < B_max_mT");
        double ppm = c.cfg.get_double("noise.n_er_ppm");
        auto fn = noise_for(c, y_mode(c));
        auto s = field_sweep_response(sys, i, j, theta, phi, bmin, bmax, steps(c, "sweep.steps", 3), fn.model(ppm),
                                      c.cfg.sensitivity_options());
        std::vector<std::vector<std::string>> rows;
        for (std::size_t k = 0; k < s.B.size(); ++k)
            rows.push_back({fmt(s.B[k]), fmt(s.frequency[k]), fmt(s.dnu_dB[k]), fmt(s.t2[k])});
        json peaks = json::array();
        for (const auto& p : s.peaks) peaks.push_back({{"B_mT", p.B}, {"T2_s", p.t2}, {"fwhm_mT", p.fwhm}});
        c.out->write_csv("sweep_field.csv", {"B_mT", "freq_MHz", "dnu_dB_GHz_per_mT", "T2_s"}, rows);
        c.out->write_json("sweep_field.json", {{"site", site},
                                               {"i", i},
                                               {"j", j},
                                               {"theta_deg", theta},
                                               {"phi_deg", phi},
                                               {"turning_points_mT", s.turning_points},
                                               {"peaks", peaks},
                                               {"noise", noise_json(fn, ppm)}});
        for (const auto& p : s.peaks)
            std::printf("peak at %.4f mT: T2 %.4g s, FWHM %.4g mT\n", p.B, p.t2, p.fwhm);
        for (double b : s.turning_points) std::printf("turning point at %.4f mT\n", b);
    } else if (mode == "concentration") {
        const auto& fs = c.cfg.get("sweep.field");
        Vec3 B = Vec3::Zero();
        if (fs == "opt") {
            B = refine_optimum(c, ref);
        } else if (fs != "zero") {
            auto v = parse_list(fs, 3);
            B = Vec3(v[0], v[1], v[2]);
        }
        auto ppm = log_space(positive(c, "sweep.ppm_min"), positive(c, "sweep.ppm_max"), steps(c, "sweep.points", 1));
        auto fn = noise_for(c, y_mode(c));
        auto cc = concentration_sweep(sys, i, j, ppm, fn, B);
        std::vector<std::vector<std::string>> rows;
        for (std::size_t k = 0; k < ppm.size(); ++k)
            rows.push_back({fmt(ppm[k]), fmt(fn.er_mode(ppm[k])), fmt(cc.t2_er_only[k]), fmt(cc.t2_full[k])});
        c.out->write_csv("sweep_concentration.csv", {"n_er_ppm", "er_mode_uT", "T2_er_only_s", "T2_full_s"}, rows);
        c.out->write_json("sweep_concentration.json", {{"site", site},
                                                       {"i", i},
                                                       {"j", j},
                                                       {"B_mT", to_json(B)},
                                                       {"T2_host_limit_s", cc.t2_host_limit},
                                                       {"saturation_ppm", cc.saturation_ppm},
                                                       {"noise", noise_json(fn, 0.0)}});
        std::printf("site %d (%d,%d): host-limited T2 %.4g s, saturation below %.4g ppm\n", site, i, j,
                    cc.t2_host_limit, cc.saturation_ppm);
    } else if (mode == "noise") {
        // Er-bath Monte Carlo against the analytic estimate over a concentration range.
        auto ppm = log_space(positive(c, "sweep.ppm_min"), positive(c, "sweep.ppm_max"), steps(c, "sweep.points", 1));
        auto s = noise_settings(c.data, site);
        s.workers = workers(c);
        s.er_resonant_only = c.cfg.get_bool("noise.er_resonant_only");
        auto samples = static_cast<std::size_t>(c.cfg.get_int("noise.samples"));
        std::vector<std::vector<std::string>> rows;
        json pts = json::array();
        for (std::size_t k = 0; k < ppm.size(); ++k) {
            auto d = run_fluctuation_mc(BathKind::dopant_Er, ppm[k], samples, c.cfg.get_uint("run.seed") + k, s);
            double an = analytic_er_fluctuation(ppm[k], c.data.lattice, c.data.noise);
            rows.push_back({fmt(ppm[k]), fmt(d.mode), fmt(an), fmt(d.mode / an)});
            pts.push_back({{"n_er_ppm", ppm[k]}, {"mc_mode_uT", d.mode}, {"analytic_mode_uT", an},
                           {"fit_failed", d.fit_failed}});
            std::printf("%12.4g ppm  MC %.5g uT  analytic %.5g uT  ratio %.3f\n", ppm[k], d.mode, an, d.mode / an);
        }
        c.out->write_csv("sweep_noise.csv", {"n_er_ppm", "mc_mode_uT", "analytic_mode_uT", "ratio"}, rows);
        c.out->write_json("sweep_noise.json", {{"site", site}, {"samples", samples}, {"points", pts}});
    } else {
        throw UsageError("sweep.mode must be field, concentration or noise");
    }
}

// ---------------------------------------------------------------- appendix-e, frozen-core

void cmd_appendix_e(Context& c) {
    double ppm = positive(c, "appendix_e.n_er_ppm");
    double bmax = positive(c, "appendix_e.B_max_mT");
    auto fn = noise_for(c, y_mode(c));
    SpinSystem sys(c.data.site(1));
    auto s = stray_field_study(sys, fn, ppm, bmax, steps(c, "appendix_e.dense_steps", 2), c.cfg.sensitivity_options());
    auto rows_of = [](const std::vector<StrayFieldRow>& v) {
        std::vector<std::vector<std::string>> rows;
        for (const auto& r : v)
            rows.push_back({fmt(r.B), fmt(r.t2_A), fmt(r.t2_D), fmt(r.t2_A / r.t2_D), r.fd_A ? "1" : "0",
                            r.fd_D ? "1" : "0"});
        return rows;
    };
    const std::vector<std::string> head = {"B_D1_mT", "T2_A_s", "T2_D_s", "ratio_A_over_D", "fd_A", "fd_D"};
    c.out->write_csv("appendix_e_table.csv", head, rows_of(s.table));
    c.out->write_csv("appendix_e_curve.csv", head, rows_of(s.curve));
    c.out->write_json("appendix_e.json", {{"site", 1},
                                          {"n_er_ppm", ppm},
                                          {"A", {s.A.first, s.A.second}},
                                          {"D", {s.D.first, s.D.second}},
                                          {"crossover_mT", s.crossover_found ? json(s.crossover_mT) : json(nullptr)},
                                          {"ratio_at_1mT", s.ratio_at_1mT},
                                          {"noise", noise_json(fn, ppm)}});
    std::printf("%10s %14s %14s\n", "B_mT", "T2_A_s", "T2_D_s");
    for (const auto& r : s.table) std::printf("%10.3f %14.5g %14.5g\n", r.B, r.t2_A, r.t2_D);
    if (s.crossover_found) std::printf("crossover at %.4f mT\n", s.crossover_mT);
    else std::printf("no crossover below %.4g mT\n", bmax);
    std::printf("T2(A)/T2(D) at 1 mT: %.4g\n", s.ratio_at_1mT);
}

void cmd_frozen_core(Context& c) {
    double dB = c.cfg.get_double("frozen_core.dB_y_uT");
    if (dB < 0.0) throw UsageError("frozen_core.dB_y_uT must be >= 0");
    if (dB == 0.0) dB = y_mode(c);
    auto f = frozen_core(dB, c.data.lattice, c.data.noise);
    c.out->write_csv("frozen_core.csv", {"dB_y_uT", "n_er_ppm", "radius_A", "y_count"},
                     {{fmt(dB), fmt(f.n_ppm), fmt(f.radius_A), fmt(f.y_count)}});
    c.out->write_json("frozen_core.json",
                      {{"dB_y_uT", dB}, {"n_er_ppm", f.n_ppm}, {"radius_A", f.radius_A}, {"y_count", f.y_count}});
    std::printf("dB_Y %.4f uT -> n_Er %.4g ppm, radius %.4g A, Y nuclei %.6g\n", dB, f.n_ppm, f.radius_A, f.y_count);
}

// ---------------------------------------------------------------- plumbing

void emit_error(const std::string& command, const std::string& kind, const std::string& message,
                const std::vector<std::string>& written) {
    json j = {{"error", {{"kind", kind}, {"message", message}}}, {"command", command}, {"written", written}};
    std::cerr << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
    Context c;
    CLI::App app{"Hyperfine spectra, ZEFOZ search and coherence estimates for 167Er:Y2SiO5"};
    app.require_subcommand(1);

    auto kv = [&](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
        return sub->add_option_function<std::string>(flag, [&c, key](const std::string& v) { c.overrides[key] = v; },
                                                      help);
    };
    auto flag = [&](CLI::App* sub, const std::string& name, const std::string& key, const std::string& value,
                    const std::string& help) {
        return sub->add_flag_callback(name, [&c, key, value] { c.overrides[key] = value; }, help);
    };
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", c.config_path, "key = value configuration file");
        kv(sub, "--site", "run.site", "1, 2 or both");
        kv(sub, "--seed", "run.seed", "master random seed");
        kv(sub, "--workers", "run.workers", "worker threads, 0 for all cores");
        kv(sub, "--out", "run.output_dir", "output directory");
        kv(sub, "--formats", "run.formats", "csv,json");
        kv(sub, "--dataset", "run.dataset", "tensor data file or builtin");
    };
    std::vector<std::string> raw_sets;
    auto with_set = [&](CLI::App* sub) {
        common(sub);
        sub->add_option("--set", raw_sets, "override any configuration key, section.key=value");
    };

    auto* spectrum = app.add_subcommand("spectrum", "energy levels and transitions at one field");
    with_set(spectrum);
    auto* oB = kv(spectrum, "--B", "spectrum.B", "field D1,D2,b in mT");
    auto* oS = kv(spectrum, "--sph", "spectrum.sph", "field B,theta,phi in mT and degrees");
    oB->excludes(oS);
    kv(spectrum, "--orientation", "spectrum.orientations", "subsites to list, 1, 2 or 1,2");
    flag(spectrum, "--transitions", "spectrum.transitions", "true", "also list all 120 transitions");

    auto* noise = app.add_subcommand("noise", "Monte-Carlo field fluctuation distribution");
    with_set(noise);
    kv(noise, "--kind", "noise.kind", "Y or Er");
    kv(noise, "--ppm", "noise.n_er_ppm", "Er concentration, ppm");
    kv(noise, "--samples", "noise.samples", "bath realizations");
    kv(noise, "--bins", "noise.histogram_bins", "histogram bins");

    auto* search = app.add_subcommand("search", "grid-seeded Newton search for ZEFOZ points");
    with_set(search);
    kv(search, "--max-iter", "search.max_iterations", "Newton iteration cap");
    kv(search, "--transitions", "search.transitions", "list like 14-15;13-14, empty for all");
    kv(search, "--top", "search.top_n", "rows per site in the ranked table");
    kv(search, "--ppm", "noise.n_er_ppm", "Er concentration for T2, ppm");
    flag(search, "--no-track", "search.track_levels", "false", "disable level tracking");
    flag(search, "--keep-failures", "search.keep_failures", "true", "also write non-converged runs");

    auto* scan = app.add_subcommand("scan", "T2 tolerance scan around a ZEFOZ point");
    with_set(scan);
    kv(scan, "--plane", "scan.plane", "theta,phi | B,theta | B,phi");
    kv(scan, "--center", "scan.center", "site1-opt, site2-opt or B,theta,phi");
    kv(scan, "--transition", "scan.transition", "i-j");
    kv(scan, "--span1", "scan.span1", "half width of axis 1");
    kv(scan, "--span2", "scan.span2", "half width of axis 2");
    kv(scan, "--steps1", "scan.steps1", "points on axis 1");
    kv(scan, "--steps2", "scan.steps2", "points on axis 2");
    kv(scan, "--ppm", "noise.n_er_ppm", "Er concentration, ppm");

    auto* map = app.add_subcommand("map", "zero-field T2 map or tensor anisotropy map");
    with_set(map);
    flag(map, "--zero-field", "map.kind", "zero-field", "T2 of all 120 transitions at zero field");
    auto* oA = kv(map, "--anisotropy", "map.tensor", "A, Q or g_e");
    oA->each([&c](const std::string&) { c.overrides["map.kind"] = "anisotropy"; });
    kv(map, "--ppm", "noise.n_er_ppm", "Er concentration, ppm");
    kv(map, "--n-theta", "map.n_theta", "polar grid points");
    kv(map, "--n-phi", "map.n_phi", "azimuth grid points");

    auto* sweep = app.add_subcommand("sweep", "field, concentration or noise sweeps");
    with_set(sweep);
    kv(sweep, "--mode", "sweep.mode", "field | concentration | noise");
    kv(sweep, "--transition", "sweep.transition", "i-j");
    kv(sweep, "--direction", "sweep.direction", "opt or theta,phi in degrees");
    kv(sweep, "--field", "sweep.field", "zero, opt or D1,D2,b in mT");
    kv(sweep, "--B-min", "sweep.B_min_mT", "mT");
    kv(sweep, "--B-max", "sweep.B_max_mT", "mT");
    kv(sweep, "--steps", "sweep.steps", "field points");
    kv(sweep, "--ppm-min", "sweep.ppm_min", "ppm");
    kv(sweep, "--ppm-max", "sweep.ppm_max", "ppm");
    kv(sweep, "--points", "sweep.points", "concentration points");
    kv(sweep, "--ppm", "noise.n_er_ppm", "Er concentration for the field sweep, ppm");

    auto* appe = app.add_subcommand("appendix-e", "stray-field study near zero field, site 1");
    with_set(appe);
    kv(appe, "--ppm", "appendix_e.n_er_ppm", "Er concentration, ppm");
    kv(appe, "--B-max", "appendix_e.B_max_mT", "largest field along D1, mT");
    kv(appe, "--steps", "appendix_e.dense_steps", "points of the dense curve");

    auto* frozen = app.add_subcommand("frozen-core", "concentration at which Er noise matches the Y bath");
    with_set(frozen);
    kv(frozen, "--dB-y", "frozen_core.dB_y_uT", "Y-bath mode, uT; 0 runs the Monte Carlo");

    auto* table = app.add_subcommand("table", "rank a saved point set and optionally fit its geometry");
    with_set(table);
    kv(table, "--input", "table.input", "zefoz_points.json from search");
    kv(table, "--top", "search.top_n", "rows per site");
    kv(table, "--fit", "table.fit", "line or plane");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::string cmd = app.get_subcommands().empty() ? "" : app.get_subcommands().front()->get_name();
        emit_error(cmd, "usage_error", e.what(), {});
        return 2;
    }
    c.command = app.get_subcommands().front()->get_name();

    static const std::map<std::string, std::function<void(Context&)>> handlers = {
        {"spectrum", cmd_spectrum},   {"noise", cmd_noise},     {"search", cmd_search},
        {"scan", cmd_scan},           {"map", cmd_map},         {"sweep", cmd_sweep},
        {"appendix-e", cmd_appendix_e}, {"frozen-core", cmd_frozen_core}, {"table", cmd_table}};

    try {
        if (!c.config_path.empty()) c.cfg.load_file(c.config_path);
        // A field given on the command line replaces any field form from the file.
        if (c.overrides.count("spectrum.B")) c.cfg.set("spectrum.sph", "");
        if (c.overrides.count("spectrum.sph")) c.cfg.set("spectrum.B", "");
        for (const auto& [k, v] : c.overrides) c.cfg.set(k, v);
        for (const auto& s : raw_sets) {
            auto eq = s.find('=');
            if (eq == std::string::npos) throw UsageError("--set expects section.key=value, got '" + s + "'");
            c.cfg.set(s.substr(0, eq), s.substr(eq + 1));
        }
        c.data = c.cfg.dataset();
        c.out = std::make_unique<OutputWriter>(make_writer(c));
        handlers.at(c.command)(c);
    } catch (const Error& e) {
        emit_error(c.command, e.kind(), e.what(), c.out ? c.out->written() : std::vector<std::string>{});
        return e.kind() == "usage_error" ? 2 : 1;
    } catch (const std::exception& e) {
        emit_error(c.command, "internal_error", e.what(), c.out ? c.out->written() : std::vector<std::string>{});
        return 1;
    }
    return 0;
}
