// One PASS/FAIL line per acceptance criterion. Tolerances are pinned here.
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>
#include <sys/wait.h>

#include "erzefoz/analysis.hpp"

using namespace erzefoz;
namespace fs = std::filesystem;

namespace {

const Dataset& data() {
    static const Dataset d = builtin_dataset();
    return d;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool within_rel(double v, double ref, double rel) { return std::abs(v - ref) <= rel * std::abs(ref); }
bool within_factor(double v, double ref, double f) { return v >= ref / f && v <= ref * f; }

std::string f(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
std::string f(const char* fmt, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, fmt);
    std::vsnprintf(buf, sizeof buf, fmt, ap);
    va_end(ap);
    return buf;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& name, const std::function<Outcome()>& body) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %2d %s (%.1f s): %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), seconds_since(t0),
                o.detail.c_str());
    std::fflush(stdout);
}

Vec3 random_field(std::mt19937_64& rng, double max_mT) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vec3 v;
    do v = Vec3(u(rng), u(rng), u(rng));
    while (v.norm() > 1.0 || v.norm() < 0.01);
    return max_mT * v;
}

NoiseSettings mc_settings() {
    auto s = noise_settings(data(), 1);
    s.workers = 0;
    return s;
}

// Shared state computed once.
double g_y_mode = 0.0;
FieldNoise g_noise;
ZefozPoint g_opt[3];
SearchResult g_search[3];
bool g_search_done = false;

double y_mode() {
    if (g_y_mode == 0.0) g_y_mode = run_fluctuation_mc(BathKind::host_Y, 0.0, 6000, 1, mc_settings()).mode;
    return g_y_mode;
}

const FieldNoise& noise() {
    if (g_noise.y_mode_uT != y_mode()) g_noise = field_noise(data(), y_mode());
    return g_noise;
}

const ZefozPoint& optimum(int site) {
    if (!g_opt[site].converged) {
        auto ref = reference_optimum(site);
        SpinSystem sys(data().site(site));
        auto r = refine_to_zefoz(sys, ref.i, ref.j, ref.seed, SearchConfig{}, noise().model(10.0));
        if (r.status != "converged") throw NumericalError("optimum of site " + std::to_string(site) + ": " + r.status);
        g_opt[site] = r.point;
    }
    return g_opt[site];
}

const SearchResult& search(int site) {
    if (!g_search_done) {
        for (int s : {1, 2}) g_search[s] = run_search(data().site(s), SearchConfig{}, noise().model(10.0));
        g_search_done = true;
    }
    return g_search[site];
}

struct RefRow {
    int i, j;
    double B, nu;
};

const std::vector<RefRow> kRows1 = {{10, 11, 2062, 783.0}, {5, 6, 2134, 736.3},  {9, 10, 959, 828.3},
                                    {8, 9, 741, 885.3},    {9, 11, 1320, 1611.2}, {9, 12, 2201, 2363.5},
                                    {6, 7, 1998, 745.8},   {4, 7, 2475, 2216.2},  {8, 10, 831, 1713.5},
                                    {8, 13, 2451, 3985.6}};
const std::vector<RefRow> kRows2 = {{14, 15, 633, 796.3}, {6, 7, 668, 797.6},   {13, 14, 413, 796.0},
                                    {13, 15, 510, 1592.2}, {12, 13, 283, 798.0}, {5, 7, 513, 1594.6},
                                    {5, 6, 335, 797.0},   {12, 14, 344, 1593.9}, {12, 15, 422, 2390.0},
                                    {11, 12, 191, 803.2}};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args, const fs::path& out) {
    std::string cmd = std::string(ERZEFOZ_CLI) + " " + args + " --out " + out.string() + " > /dev/null 2> " +
                      (out.string() + ".err");
    int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

}  // namespace

int main() {
    criterion(1, "zero-field spectrum regression", [] {
        auto t0 = std::chrono::steady_clock::now();
        struct G {
            int site, i, j;
            double ref;
        };
        const G gaps[] = {{1, 7, 9, 850.9}, {1, 6, 8, 746.6}, {1, 8, 9, 427.6}, {2, 7, 9, 915.9}, {2, 6, 8, 743.2}};
        bool ok = true;
        std::string d;
        for (const auto& g : gaps) {
            double nu = transition_frequency(SpinSystem(data().site(g.site)).spectrum(Vec3::Zero()), g.i, g.j);
            ok = ok && std::abs(nu - g.ref) <= 1.0;
            d += f("s%d(%d,%d)=%.2f ", g.site, g.i, g.j, nu);
        }
        double t = seconds_since(t0);
        return Outcome{ok && t < 1.0, d + f("in %.3f s", t)};
    });

    criterion(2, "zero-field S1 vanishes", [] {
        auto t0 = std::chrono::steady_clock::now();
        double worst = 0.0;
        for (int site : {1, 2}) {
            SpinSystem sys(data().site(site));
            auto spec = sys.spectrum(Vec3::Zero());
            for (int i = 0; i < kLevels; ++i)
                for (int j = i + 1; j < kLevels; ++j) worst = std::max(worst, sensitivity(sys, spec, i, j).S1.norm());
        }
        double t = seconds_since(t0);
        return Outcome{worst < 1e-10 && t < 1.0, f("max |S1| = %.3g GHz/mT over 240 pairs in %.3f s", worst, t)};
    });

    criterion(3, "time reversal H(B) vs H(-B)", [] {
        std::mt19937_64 rng(2024);
        double worst = 0.0;
        for (int k = 0; k < 100; ++k) {
            SpinSystem sys(data().site(1 + k % 2));
            Vec3 B = random_field(rng, 3000.0);
            worst = std::max(worst, (sys.spectrum(B).energies - sys.spectrum(-B).energies).cwiseAbs().maxCoeff());
        }
        return Outcome{worst < 1e-9, f("max |dE| = %.3g MHz", worst)};
    });

    criterion(4, "derivative oracle", [] {
        std::mt19937_64 rng(77);
        std::uniform_int_distribution<int> lvl(0, kLevels - 1);
        int accepted = 0, tries = 0;
        double w1 = 0.0, w2 = 0.0;
        while (accepted < 50 && tries < 5000) {
            ++tries;
            int site = 1 + tries % 2;
            SpinSystem sys(data().site(site));
            Vec3 B = random_field(rng, 2000.0);
            auto spec = sys.spectrum(B);
            double gap = 1e300;
            for (int n = 1; n < kLevels; ++n) gap = std::min(gap, spec.energies[n] - spec.energies[n - 1]);
            // non-degenerate: every adjacent gap above 20 MHz
            if (gap < 20.0) continue;
            int i = lvl(rng), j = lvl(rng);
            if (i == j) continue;
            if (i > j) std::swap(i, j);
            auto p = sensitivity_perturbative(sys, spec, i, j);
            auto fd = sensitivity_finite_difference(sys, B, i, j, 0.05);
            w1 = std::max(w1, (p.S1 - fd.S1).norm() / p.S1.norm());
            w2 = std::max(w2, (p.S2 - fd.S2).norm() / p.S2.norm());
            ++accepted;
        }
        return Outcome{accepted == 50 && w1 <= 0.01 && w2 <= 0.01,
                       f("%d fields, worst rel err S1 %.2e, S2 %.2e", accepted, w1, w2)};
    });

    criterion(5, "optimal point recovery", [] {
        auto t0 = std::chrono::steady_clock::now();
        const auto& p2 = optimum(2);
        const auto& p1 = optimum(1);
        auto s2 = signed_polar(p2.B);
        bool ok2 = std::abs(p2.B.norm() - 633.52) <= 1.0 && std::abs(s2.theta - (-37.54)) <= 0.05 &&
                   std::abs(s2.phi - (-10.94)) <= 0.05 && std::abs(p2.frequency - 796.3) <= 1.0 &&
                   within_rel(p2.s2_max, 9.90e-8, 0.2);
        bool ok1 = std::abs(p1.B.norm() - 2062.0) <= 5.0 && std::abs(p1.frequency - 783.0) <= 1.0;
        double t = seconds_since(t0);
        return Outcome{ok1 && ok2 && t < 60.0,
                       f("site 2 (14,15): |B| %.3f mT, theta %.4f, phi %.4f, nu %.3f MHz, s2max %.3e; "
                         "site 1 (10,11): |B| %.2f mT, nu %.3f MHz",
                         p2.B.norm(), s2.theta, s2.phi, p2.frequency, p2.s2_max, p1.B.norm(), p1.frequency)};
    });

    criterion(6, "reference table coverage of the full search", [] {
        auto t0 = std::chrono::steady_clock::now();
        search(1);
        double t = seconds_since(t0);
        int hits[3] = {0, 0, 0};
        std::string missing;
        for (int site : {1, 2}) {
            for (const auto& q : site == 1 ? kRows1 : kRows2) {
                bool found = false;
                for (const auto& p : search(site).points)
                    found = found || (p.i == q.i && p.j == q.j && std::abs(p.B.norm() - q.B) <= 0.02 * q.B &&
                                      std::abs(p.frequency - q.nu) <= 2.0);
                hits[site] += found;
                if (!found) missing += f(" s%d(%d,%d)", site, q.i, q.j);
            }
        }
        return Outcome{hits[1] >= 8 && hits[2] >= 8 && t < 600.0,
                       f("site 1 %d/10, site 2 %d/10 in %.0f s; missing:%s", hits[1], hits[2], t, missing.c_str())};
    });

    criterion(7, "T2 calibration band", [] {
        double t1 = optimum(1).t2, t2 = optimum(2).t2;
        auto m = zero_field_t2_map(SpinSystem(data().site(1)), 10.0, noise());
        double tz = m.t2(7, 9);
        bool ok = within_factor(t1, 173.9, 2.0) && within_factor(t2, 95.3, 2.0) && within_factor(tz, 4.12e-3, 1.5);
        return Outcome{ok, f("site 1 opt %.2f s (173.9), site 2 opt %.2f s (95.3), site 1 B=0 (7,9) %.3f ms (4.12)", t1,
                             t2, tz * 1e3)};
    });

    criterion(8, "noise model", [] {
        auto t0 = std::chrono::steady_clock::now();
        double ym = y_mode();
        auto s = mc_settings();
        double er10 = run_fluctuation_mc(BathKind::dopant_Er, 10.0, 6000, 1, s).mode;
        double worst = 0.0;
        auto ppm = log_space(10.0, 1e5, 9);
        for (std::size_t k = 0; k < ppm.size(); ++k) {
            double mc = run_fluctuation_mc(BathKind::dopant_Er, ppm[k], 3000, 100 + k, s).mode;
            double an = analytic_er_fluctuation(ppm[k], data().lattice, data().noise);
            worst = std::max(worst, std::abs(mc / an - 1.0));
        }
        double t = seconds_since(t0);
        bool ok = within_rel(ym, 4.45, 0.1) && within_factor(er10, 1.0, 2.0) && worst <= 0.3 && t < 120.0;
        return Outcome{ok, f("Y mode %.3f uT, Er mode at 10 ppm %.3f uT, worst MC/analytic deviation %.1f%% (%.0f s)",
                             ym, er10, 100.0 * worst, t)};
    });

    criterion(9, "frozen core", [] {
        auto fc = frozen_core(y_mode(), data().lattice, data().noise);
        bool ok = within_rel(fc.n_ppm, 45.3, 0.1) && within_rel(fc.radius_A, 111.25, 0.1) &&
                  within_rel(fc.y_count, 108000.0, 0.1);
        return Outcome{ok, f("n %.2f ppm, r %.2f A, Y count %.0f", fc.n_ppm, fc.radius_A, fc.y_count)};
    });

    criterion(10, "tolerance scans", [] {
        const auto model = noise().model(10.0);
        double drop[3] = {0, 0, 0};
        bool found = true;
        for (int site : {1, 2}) {
            const auto& p = optimum(site);
            auto g = tolerance_scan(SpinSystem(data().site(site)), p.i, p.j, p.B, ScanPlane::theta_phi, 0.05, 0.05,
                                    201, 201, model);
            drop[site] = g.drop_radius;
            found = found && g.drop_found;
        }
        const auto& p2 = optimum(2);
        auto sp = cartesian_to_spherical(p2.B);
        auto sw = field_sweep_response(SpinSystem(data().site(2)), p2.i, p2.j, sp.theta, sp.phi, sp.B - 5.0,
                                       sp.B + 5.0, 2001, model);
        double fwhm = 0.0, best = 1e300;
        for (const auto& pk : sw.peaks)
            if (std::abs(pk.B - sp.B) < best) {
                best = std::abs(pk.B - sp.B);
                fwhm = pk.fwhm;
            }
        bool ok = found && within_rel(drop[1], 0.005, 0.5) && within_rel(drop[2], 0.02, 0.5) &&
                  within_rel(fwhm, 1.0, 0.5);
        return Outcome{ok, f("decade drop site 1 %.5f deg (0.005), site 2 %.5f deg (0.02); field FWHM %.3f mT (1.0)",
                             drop[1], drop[2], fwhm)};
    });

    criterion(11, "ZEFOZ cloud geometry", [] {
        const Vec3 ref = Vec3(0.702, 0.532, -0.471).normalized();
        auto c1 = zefoz_cloud(search(1).points, 1), c2 = zefoz_cloud(search(2).points, 2);
        auto plane2 = fit_point_cloud(c2, FitKind::plane);
        double ang = angle_between_axes_deg(plane2.vector, ref);
        // Line fits judged at the scale of each cloud's own plane residual.
        auto plane1 = fit_point_cloud(c1, FitKind::plane);
        auto line1 = fit_point_cloud(c1, FitKind::line, 3.0 * plane1.rms_residual);
        auto line2 = fit_point_cloud(c2, FitKind::line, 3.0 * plane2.rms_residual);
        bool ok = ang <= 5.0 && line1.inlier_fraction > line2.inlier_fraction;
        return Outcome{ok, f("site 2 plane normal (%.3f, %.3f, %.3f) at %.1f deg; site 1 normal (%.3f, %.3f, %.3f) at "
                             "%.1f deg; line inliers site 1 %.3f vs baseline site 2 %.3f",
                             plane2.vector.x(), plane2.vector.y(), plane2.vector.z(), ang, plane1.vector.x(),
                             plane1.vector.y(), plane1.vector.z(), angle_between_axes_deg(plane1.vector, ref),
                             line1.inlier_fraction, line2.inlier_fraction)};
    });

    criterion(12, "stray-field table", [] {
        auto s = stray_field_study(SpinSystem(data().site(1)), noise(), 50.0, 1.0, 201);
        const double refA[] = {3e-6, 21e-6, 96e-6, 134e-6}, refD[] = {1.3e-3, 305e-6, 119e-6, 38e-6};
        bool ok = s.table.size() == 4;
        std::string d;
        for (std::size_t k = 0; k < s.table.size() && k < 4; ++k) {
            ok = ok && within_rel(s.table[k].t2_A, refA[k], 0.5) && within_rel(s.table[k].t2_D, refD[k], 0.5);
            d += f("B=%.1f A %.3g s D %.3g s; ", s.table[k].B, s.table[k].t2_A, s.table[k].t2_D);
        }
        ok = ok && s.crossover_found && within_rel(s.crossover_mT, 0.3, 0.5) && within_rel(s.ratio_at_1mT, 3.5, 0.3);
        return Outcome{ok, d + f("crossover %.3f mT (0.3), ratio at 1 mT %.2f (3.5)", s.crossover_mT, s.ratio_at_1mT)};
    });

    criterion(13, "electron Zeeman span at the optima", [] {
        double z1 = optimum(1).zeeman_span_GHz, z2 = optimum(2).zeeman_span_GHz;
        return Outcome{within_rel(z1, 94.6, 0.02) && within_rel(z2, 68.1, 0.02),
                       f("site 1 %.2f GHz (94.6), site 2 %.2f GHz (68.1)", z1, z2)};
    });

    criterion(14, "byte-identical reruns", [] {
        const std::vector<std::string> cmds = {
            "spectrum --site 2 --sph 633.52,37.5383,-10.9417 --seed 3",
            "noise --kind Er --ppm 100 --samples 500 --seed 5",
            "noise --kind Y --samples 300 --seed 5",
            "search --site 2 --transitions \"14-15;13-14\" --seed 9 --set noise.y_mode_uT=4.45",
            "scan --center site2-opt --steps1 21 --steps2 21 --set noise.y_mode_uT=4.45",
            "map --zero-field --site 1 --set noise.y_mode_uT=4.45",
            "sweep --mode field --site 2 --steps 201 --set noise.y_mode_uT=4.45",
            "appendix-e --steps 51 --set noise.y_mode_uT=4.45",
            "frozen-core --dB-y 4.45"};
        fs::path root = fs::temp_directory_path() / "erzefoz_acceptance_determinism";
        fs::remove_all(root);
        fs::create_directories(root);
        int files = 0;
        std::string bad;
        for (std::size_t k = 0; k < cmds.size(); ++k) {
            fs::path a = root / (std::to_string(k) + "a"), b = root / (std::to_string(k) + "b");
            if (run_cli(cmds[k], a) != 0 || run_cli(cmds[k], b) != 0) {
                bad += " [exit " + cmds[k] + "]";
                continue;
            }
            for (const auto& e : fs::directory_iterator(a)) {
                ++files;
                if (slurp(e.path()) != slurp(b / e.path().filename())) bad += " " + e.path().filename().string();
            }
        }
        return Outcome{bad.empty() && files > 0, f("%zu commands, %d files compared", cmds.size(), files) +
                                                     (bad.empty() ? "" : "; differing:" + bad)};
    });

    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
