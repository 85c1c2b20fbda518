#include "erzefoz/analysis.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <limits>

#include "erzefoz/constants.hpp"
#include "erzefoz/parallel.hpp"

namespace erzefoz {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <class F>
double bisect_root(F f, double a, double b) {
    auto r = boost::math::tools::bisect(f, a, b, boost::math::tools::eps_tolerance<double>(45));
    return 0.5 * (r.first + r.second);
}

}  // namespace

double FieldNoise::er_mode(double n_er_ppm) const {
    if (n_er_ppm <= 0.0) return 0.0;
    return analytic_er_fluctuation(n_er_ppm, lattice, calibration);
}

NoiseSummary FieldNoise::summary(double n_er_ppm) const {
    return combine_noise(include_host ? y_mode_uT : 0.0, er_mode(n_er_ppm));
}

T2Model FieldNoise::model(double n_er_ppm) const {
    T2Model m;
    m.dB_uT = summary(n_er_ppm).sigma;
    m.scalarization = scalarization;
    return m;
}

FieldNoise field_noise(const Dataset& d, double y_mode_uT) {
    FieldNoise n;
    n.y_mode_uT = y_mode_uT;
    n.lattice = d.lattice;
    n.calibration = d.noise;
    return n;
}

std::vector<double> log_space(double lo, double hi, int n) {
    if (!(lo > 0.0 && hi >= lo) || n < 1) throw InvalidParameter("log_space needs 0 < lo <= hi and n >= 1");
    std::vector<double> v(n);
    for (int k = 0; k < n; ++k) v[k] = n == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(k) / (n - 1));
    return v;
}

ConcentrationCurve concentration_sweep(const SpinSystem& sys, int i, int j, const std::vector<double>& ppm,
                                       const FieldNoise& noise, const Vec3& B) {
    ConcentrationCurve c;
    c.i = i;
    c.j = j;
    c.B = B;
    c.ppm = ppm;
    const auto p = sensitivity(sys, B, i, j);
    FieldNoise er_only = noise;
    er_only.include_host = false;
    for (double n : ppm) {
        if (!(n > 0.0)) throw InvalidParameter("concentration sweep needs positive ppm values");
        c.t2_er_only.push_back(t2_from_sensitivities(p, er_only.model(n)));
        c.t2_full.push_back(t2_from_sensitivities(p, noise.model(n)));
    }
    T2Model host = noise.model(0.0);
    c.t2_host_limit = t2_from_sensitivities(p, host);
    auto excess = [&](double logn) {
        return t2_from_sensitivities(p, noise.model(std::pow(10.0, logn))) - 0.9 * c.t2_host_limit;
    };
    const double lo = -6.0, hi = 6.0;
    if (!std::isfinite(c.t2_host_limit) || excess(hi) >= 0.0)
        c.saturation_ppm = 1e6;
    else if (excess(lo) < 0.0)
        c.saturation_ppm = 0.0;
    else
        c.saturation_ppm = std::pow(10.0, bisect_root(excess, lo, hi));
    return c;
}

ZeroFieldMap zero_field_t2_map(const SpinSystem& sys, double n_er_ppm, const FieldNoise& noise) {
    ZeroFieldMap m;
    m.site = sys.site().site_id;
    m.n_er_ppm = n_er_ppm;
    m.t2.setConstant(kNaN);
    m.frequency.setConstant(kNaN);
    const auto spec = sys.spectrum(Vec3::Zero());
    const auto model = noise.model(n_er_ppm);
    m.min_t2 = std::numeric_limits<double>::infinity();
    m.max_t2 = -1.0;
    for (int i = 0; i < kLevels; ++i)
        for (int j = i + 1; j < kLevels; ++j) {
            auto p = sensitivity(sys, spec, i, j);
            if (p.finite_difference) ++m.finite_difference_pairs;
            double t2 = t2_from_sensitivities(p, model);
            m.t2(i, j) = t2;
            m.frequency(i, j) = transition_frequency(spec, i, j);
            if (t2 < m.min_t2) {
                m.min_t2 = t2;
                m.argmin = {i, j};
            }
            if (t2 > m.max_t2) {
                m.max_t2 = t2;
                m.argmax = {i, j};
            }
        }
    return m;
}

FieldSweep field_sweep_response(const SpinSystem& sys, int i, int j, double theta_deg, double phi_deg, double B_min,
                                double B_max, int steps, const T2Model& model, const SensitivityOptions& opt) {
    check_levels(i, j);
    if (steps < 3 || !(B_max > B_min)) throw InvalidParameter("field sweep needs B_max > B_min and at least 3 steps");
    FieldSweep s;
    s.i = i;
    s.j = j;
    s.theta = theta_deg;
    s.phi = phi_deg;
    const Vec3 u = spherical_to_cartesian({1.0, theta_deg, phi_deg});
    auto slope = [&](double B) { return sensitivity_perturbative(sys, sys.spectrum(B * u), i, j).S1.dot(u); };
    auto t2_at = [&](double B) { return t2_from_sensitivities(sensitivity(sys, B * u, i, j, opt), model); };
    for (int k = 0; k < steps; ++k) {
        double B = B_min + (B_max - B_min) * k / (steps - 1);
        auto spec = sys.spectrum(B * u);
        auto p = sensitivity(sys, spec, i, j, opt);
        s.B.push_back(B);
        s.frequency.push_back(transition_frequency(spec, i, j));
        s.dnu_dB.push_back(p.S1.dot(u));
        s.t2.push_back(t2_from_sensitivities(p, model));
    }
    for (int k = 0; k + 1 < steps; ++k) {
        double a = s.dnu_dB[k], b = s.dnu_dB[k + 1];
        if (a == 0.0)
            s.turning_points.push_back(s.B[k]);
        else if (a * b < 0.0)
            s.turning_points.push_back(bisect_root(slope, s.B[k], s.B[k + 1]));
    }
    for (int k = 1; k + 1 < steps; ++k) {
        if (!(s.t2[k] > s.t2[k - 1] && s.t2[k] >= s.t2[k + 1])) continue;
        SweepPeak pk;
        auto best = boost::math::tools::brent_find_minima([&](double B) { return -t2_at(B); }, s.B[k - 1],
                                                          s.B[k + 1], 50);
        pk.B = best.first;
        pk.t2 = -best.second;
        if (pk.t2 < s.t2[k]) {
            pk.B = s.B[k];
            pk.t2 = s.t2[k];
        }
        const double half = 0.5 * pk.t2;
        auto f = [&](double B) { return t2_at(B) - half; };
        int l = k, r = k;
        while (l > 0 && s.t2[l] >= half) --l;
        while (r + 1 < steps && s.t2[r] >= half) ++r;
        if (s.t2[l] < half && s.t2[r] < half) {
            double left = bisect_root(f, s.B[l], std::min(pk.B, s.B[l + 1]));
            double right = bisect_root(f, std::max(pk.B, s.B[r - 1]), s.B[r]);
            pk.fwhm = right - left;
        }
        s.peaks.push_back(pk);
    }
    return s;
}

ScanPlane parse_scan_plane(const std::string& s) {
    if (s == "B,theta" || s == "B_theta") return ScanPlane::B_theta;
    if (s == "B,phi" || s == "B_phi") return ScanPlane::B_phi;
    if (s == "theta,phi" || s == "theta_phi") return ScanPlane::theta_phi;
    throw UsageError("plane must be one of B,theta  B,phi  theta,phi");
}

std::string to_string(ScanPlane p) {
    switch (p) {
        case ScanPlane::B_theta: return "B,theta";
        case ScanPlane::B_phi: return "B,phi";
        case ScanPlane::theta_phi: return "theta,phi";
    }
    return "?";
}

ScanGrid2D tolerance_scan(const SpinSystem& sys, int i, int j, const Vec3& center, ScanPlane plane, double span1,
                          double span2, int steps1, int steps2, const T2Model& model, int workers,
                          const SensitivityOptions& opt) {
    check_levels(i, j);
    if (steps1 < 3 || steps2 < 3) throw UsageError("tolerance scan needs at least 3 steps per axis");
    if (!(span1 > 0.0 && span2 > 0.0)) throw UsageError("tolerance scan spans must be positive");
    ScanGrid2D g;
    g.site = sys.site().site_id;
    g.i = i;
    g.j = j;
    g.plane = plane;
    g.center = cartesian_to_spherical(center);
    const auto& c = g.center;
    auto axis = [](const char* name, const char* unit, double mid, double span, int steps) {
        return ScanAxis{name, unit, mid - span, mid + span, steps};
    };
    switch (plane) {
        case ScanPlane::B_theta:
            g.axis1 = axis("B", "mT", c.B, span1, steps1);
            g.axis2 = axis("theta", "deg", c.theta, span2, steps2);
            break;
        case ScanPlane::B_phi:
            g.axis1 = axis("B", "mT", c.B, span1, steps1);
            g.axis2 = axis("phi", "deg", c.phi, span2, steps2);
            break;
        case ScanPlane::theta_phi:
            g.axis1 = axis("theta", "deg", c.theta, span1, steps1);
            g.axis2 = axis("phi", "deg", c.phi, span2, steps2);
            break;
    }
    auto field = [&](double a1, double a2) {
        FieldSpherical f = c;
        switch (plane) {
            case ScanPlane::B_theta: f.B = a1; f.theta = a2; break;
            case ScanPlane::B_phi: f.B = a1; f.phi = a2; break;
            case ScanPlane::theta_phi: f.theta = a1; f.phi = a2; break;
        }
        return spherical_to_cartesian(f);
    };
    g.values.resize(steps1, steps2);
    parallel_for(static_cast<std::size_t>(steps1) * steps2, workers, [&](std::size_t idx) {
        int r = static_cast<int>(idx / steps2), q = static_cast<int>(idx % steps2);
        auto p = sensitivity(sys, field(g.axis1.value(r), g.axis2.value(q)), i, j, opt);
        g.values(r, q) = t2_from_sensitivities(p, model);
    });
    g.center_t2 = t2_from_sensitivities(sensitivity(sys, center, i, j, opt), model);

    const int c1 = (steps1 - 1) / 2, c2 = (steps2 - 1) / 2;
    const double d1 = (g.axis1.max - g.axis1.min) / (steps1 - 1);
    const double d2 = (g.axis2.max - g.axis2.min) / (steps2 - 1);
    const double target = std::log10(g.values(c1, c2)) - 1.0;
    double best = std::numeric_limits<double>::infinity();
    for (int a = -1; a <= 1; ++a)
        for (int b = -1; b <= 1; ++b) {
            if (a == 0 && b == 0) continue;
            const double len = std::hypot(a * d1, b * d2);
            double prev = std::log10(g.values(c1, c2));
            for (int k = 1;; ++k) {
                int r = c1 + k * a, q = c2 + k * b;
                if (r < 0 || q < 0 || r >= steps1 || q >= steps2) break;
                double v = std::log10(g.values(r, q));
                if (v <= target) {
                    double t = (prev - target) / (prev - v);
                    best = std::min(best, (k - 1 + t) * len);
                    if (k == 1) g.resolution_warning = true;
                    break;
                }
                prev = v;
            }
        }
    g.drop_found = std::isfinite(best);
    g.drop_radius = g.drop_found ? best : 0.0;
    if (!g.drop_found)
        g.warning = "no one-decade drop inside the scanned window";
    else if (g.resolution_warning)
        g.warning = "one-decade drop within the first grid cell; refine the grid";
    return g;
}

TensorKind parse_tensor_kind(const std::string& s) {
    if (s == "A") return TensorKind::A;
    if (s == "Q") return TensorKind::Q;
    if (s == "g_e" || s == "g" || s == "ge") return TensorKind::g_e;
    throw UsageError("tensor must be A, Q or g_e");
}

std::string to_string(TensorKind t) {
    switch (t) {
        case TensorKind::A: return "A";
        case TensorKind::Q: return "Q";
        case TensorKind::g_e: return "g_e";
    }
    return "?";
}

double anisotropy_value(const Mat3& M, const Vec3& u) { return (M * u).norm(); }

AnisotropyMap anisotropy_map(const Mat3& M, int n_theta, int n_phi, const std::string& name) {
    if (n_theta < 2 || n_phi < 2) throw UsageError("anisotropy map needs at least 2 points per axis");
    AnisotropyMap m;
    m.tensor = name;
    m.values.resize(n_theta, n_phi);
    for (int a = 0; a < n_theta; ++a) m.theta.push_back(180.0 * a / (n_theta - 1));
    for (int b = 0; b < n_phi; ++b) m.phi.push_back(-180.0 + 360.0 * b / (n_phi - 1));
    m.max_value = -1.0;
    m.min_value = std::numeric_limits<double>::infinity();
    for (int a = 0; a < n_theta; ++a)
        for (int b = 0; b < n_phi; ++b) {
            double v = anisotropy_value(M, spherical_to_cartesian({1.0, m.theta[a], m.phi[b]}));
            m.values(a, b) = v;
            if (v > m.max_value) {
                m.max_value = v;
                m.max_theta = m.theta[a];
                m.max_phi = m.phi[b];
            }
            if (v < m.min_value) {
                m.min_value = v;
                m.min_theta = m.theta[a];
                m.min_phi = m.phi[b];
            }
        }
    Eigen::SelfAdjointEigenSolver<Mat3> es(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
    m.principal_values = es.eigenvalues();
    return m;
}

AnisotropyMap anisotropy_map(const SiteTensors& site, TensorKind t, int n_theta, int n_phi) {
    const Mat3& M = t == TensorKind::A ? site.A : t == TensorKind::Q ? site.Q : site.g_e;
    return anisotropy_map(M, n_theta, n_phi, to_string(t));
}

FitKind parse_fit_kind(const std::string& s) {
    if (s == "line") return FitKind::line;
    if (s == "plane") return FitKind::plane;
    throw UsageError("fit kind must be line or plane");
}

GeometryFit fit_point_cloud(const std::vector<Vec3>& points, FitKind kind, double inlier_cut) {
    const std::size_t need = kind == FitKind::line ? 2 : 3;
    if (points.size() < need)
        throw InvalidParameter("point cloud fit needs at least " + std::to_string(need) + " points");
    GeometryFit fit;
    fit.kind = kind;
    for (const auto& p : points) fit.centroid += p;
    fit.centroid /= static_cast<double>(points.size());
    Mat3 C = Mat3::Zero();
    for (const auto& p : points) C += (p - fit.centroid) * (p - fit.centroid).transpose();
    C /= static_cast<double>(points.size());
    Eigen::SelfAdjointEigenSolver<Mat3> es(C);
    fit.moments = es.eigenvalues();
    const double scale = std::max(fit.moments[2], 0.0);
    const double ref = 1.0 + fit.centroid.squaredNorm();
    if (scale <= 1e-24 * ref) {
        fit.degenerate = true;
        fit.note = "all points coincide";
        return fit;
    }
    if (kind == FitKind::plane && fit.moments[1] <= 1e-12 * scale) {
        fit.degenerate = true;
        fit.note = "collinear cloud; plane undefined";
        return fit;
    }
    Vec3 v = kind == FitKind::line ? es.eigenvectors().col(2) : es.eigenvectors().col(0);
    for (int k = 0; k < 3; ++k)
        if (std::abs(v[k]) > 1e-12) {
            if (v[k] < 0) v = -v;
            break;
        }
    fit.vector = v.normalized();
    std::vector<double> res;
    double ss = 0.0;
    for (const auto& p : points) {
        Vec3 d = p - fit.centroid;
        double r = kind == FitKind::line ? (d - d.dot(fit.vector) * fit.vector).norm() : std::abs(d.dot(fit.vector));
        res.push_back(r);
        ss += r * r;
    }
    fit.rms_residual = std::sqrt(ss / res.size());
    fit.inlier_cut = inlier_cut > 0.0 ? inlier_cut : 3.0 * fit.rms_residual;
    std::size_t in = 0;
    for (double r : res)
        if (r <= fit.inlier_cut) ++in;
    fit.inlier_fraction = static_cast<double>(in) / res.size();
    return fit;
}

std::vector<Vec3> zefoz_cloud(const std::vector<ZefozPoint>& points, int site, double cap_mT) {
    std::vector<Vec3> out;
    for (const auto& p : points) {
        if (p.site != site || !p.converged || p.B.norm() > cap_mT) continue;
        if (p.B.z() < 0.0 && p.partner_neg >= 0) continue;   // the partner is already counted
        out.push_back(p.B.z() < 0.0 ? Vec3(-p.B) : p.B);
    }
    return out;
}

double angle_between_axes_deg(const Vec3& a, const Vec3& b) {
    double c = std::min(1.0, std::abs(a.normalized().dot(b.normalized())));
    return std::acos(c) * 180.0 / constants::kPi;
}

StrayFieldStudy stray_field_study(const SpinSystem& site1, const FieldNoise& noise, double n_er_ppm, double B_max,
                                  int dense_steps, const SensitivityOptions& opt) {
    if (dense_steps < 2 || !(B_max > 0.0)) throw UsageError("stray-field study needs B_max > 0 and 2+ steps");
    StrayFieldStudy s;
    s.n_er_ppm = n_er_ppm;
    const auto model = noise.model(n_er_ppm);
    auto row = [&](double B) {
        const Vec3 f(B, 0.0, 0.0);
        auto spec = site1.spectrum(f);
        auto pa = sensitivity(site1, spec, s.A.first, s.A.second, opt);
        auto pd = sensitivity(site1, spec, s.D.first, s.D.second, opt);
        return StrayFieldRow{B, t2_from_sensitivities(pa, model), t2_from_sensitivities(pd, model),
                             pa.finite_difference, pd.finite_difference};
    };
    for (double B : {0.0, 0.1, 0.3, 1.0}) s.table.push_back(row(B));
    for (int k = 0; k < dense_steps; ++k) s.curve.push_back(row(B_max * k / (dense_steps - 1)));
    for (std::size_t k = 1; k < s.curve.size(); ++k) {
        if (s.curve[k].t2_A >= s.curve[k].t2_D && s.curve[k - 1].t2_A < s.curve[k - 1].t2_D) {
            auto f = [&](double B) {
                auto r = row(B);
                return std::log(r.t2_A) - std::log(r.t2_D);
            };
            s.crossover_mT = bisect_root(f, s.curve[k - 1].B, s.curve[k].B);
            s.crossover_found = true;
            break;
        }
    }
    auto r1 = row(1.0);
    s.ratio_at_1mT = r1.t2_A / r1.t2_D;
    return s;
}

}  // namespace erzefoz
