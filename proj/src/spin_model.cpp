#include "erzefoz/spin_model.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <complex>
#include <sstream>

#include "erzefoz/constants.hpp"

namespace erzefoz {

namespace {

constexpr double kDeg = constants::kPi / 180.0;
constexpr double kExactDegeneracy = 1e-8;   // MHz

template <int D>
std::array<Eigen::Matrix<cplx, D, D>, 3> angular_momentum(double j) {
    using M = Eigen::Matrix<cplx, D, D>;
    M jp = M::Zero();
    M jz = M::Zero();
    for (int k = 0; k < D; ++k) {
        double m = j - k;
        jz(k, k) = m;
        if (k > 0) jp(k - 1, k) = std::sqrt(j * (j + 1) - m * (m + 1));
    }
    M jm = jp.adjoint();
    const cplx i2(0.0, 2.0);
    return {(jp + jm) / 2.0, (jp - jm) / i2, jz};
}

}  // namespace

SpinOperators build_spin_operators() {
    SpinOperators ops;
    ops.S = angular_momentum<2>(0.5);
    ops.I = angular_momentum<8>(3.5);
    for (int k = 0; k < 3; ++k) {
        ops.S16[k] = Mat16c::Zero();
        ops.I16[k] = Mat16c::Zero();
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) {
                ops.S16[k].block<8, 8>(8 * a, 8 * b) = ops.S[k](a, b) * Mat8c::Identity();
                if (a == b) ops.I16[k].block<8, 8>(8 * a, 8 * b) = ops.I[k];
            }
    }
    return ops;
}

std::string StateLabel::str() const {
    std::ostringstream os;
    os << "|" << (s_z > 0 ? "up" : "dn") << "," << (i_z >= 0 ? "+" : "-") << static_cast<int>(std::lround(std::abs(2 * i_z)))
       << "/2>";
    return os.str();
}

SpinSystem::SpinSystem(const SiteTensors& site) : site_(site) {
    validate_site(site);
    const auto ops = build_spin_operators();
    h0_ = Mat16c::Zero();
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
            if (site.A(a, b) != 0.0) h0_ += site.A(a, b) * ops.I16[a] * ops.S16[b];
            if (site.Q(a, b) != 0.0) h0_ += site.Q(a, b) * ops.I16[a] * ops.I16[b];
        }
    for (int k = 0; k < 3; ++k) {
        moments_[k] = -constants::kMuNOverH * site.g_n * ops.I16[k];
        for (int b = 0; b < 3; ++b) moments_[k] += constants::kMuBOverH * site.g_e(k, b) * ops.S16[b];
    }
}

HamiltonianMatrix SpinSystem::hamiltonian(const Vec3& B) const {
    if (!B.allFinite()) throw InvalidParameter("field has non-finite components");
    Mat16c h = h0_;
    for (int k = 0; k < 3; ++k) h += B[k] * moments_[k];
    return h;
}

HyperfineSpectrum SpinSystem::spectrum(const Vec3& B) const { return diagonalize(hamiltonian(B), B); }

HamiltonianMatrix build_hamiltonian(const SiteTensors& site, const Vec3& B) {
    return SpinSystem(site).hamiltonian(B);
}

MomentOperators magnetic_moment_operators(const SiteTensors& site) { return SpinSystem(site).moments(); }

HyperfineSpectrum diagonalize(const HamiltonianMatrix& H, const Vec3& B) {
    Eigen::SelfAdjointEigenSolver<Mat16c> es(H);
    if (es.info() != Eigen::Success)
        throw NumericalError("eigensolver did not converge at B = " + format_vec(B) + " mT");
    HyperfineSpectrum s;
    s.field = B;
    s.vectors = es.eigenvectors();
    // Re-diagonalize each cluster of close levels (a single level is its Rayleigh quotient) in extended
    // precision. The solver leaves ~n eps |H| of roundoff, which mixes near-degenerate pairs and shows up
    // in Hellmann-Feynman slopes, finite differences and the B -> -B symmetry.
    using cld = std::complex<long double>;
    using MatL = Eigen::Matrix<cld, Eigen::Dynamic, Eigen::Dynamic>;
    const Eigen::Vector<double, kLevels> raw = es.eigenvalues();
    for (int c0 = 0; c0 < kLevels;) {
        int c1 = c0 + 1;
        while (c1 < kLevels && raw[c1] - raw[c1 - 1] < 1.0) ++c1;
        const int k = c1 - c0;
        MatL V = s.vectors.middleCols(c0, k).cast<cld>();
        MatL M = V.adjoint() * H.cast<cld>() * V;
        MatL G = V.adjoint() * V;
        if (k == 1) {
            s.energies[c0] = static_cast<double>(M(0, 0).real() / G(0, 0).real());
        } else {
            Eigen::SelfAdjointEigenSolver<MatL> sub(0.5 * (M + M.adjoint()));
            s.vectors.middleCols(c0, k) = (V * sub.eigenvectors()).cast<cplx>();
            for (int n = 0; n < k; ++n) s.energies[c0 + n] = static_cast<double>(sub.eigenvalues()[n]);
        }
        c0 = c1;
    }
    for (int n = 1; n < kLevels; ++n)
        for (int m = n; m > 0 && s.energies[m] < s.energies[m - 1]; --m) {
            std::swap(s.energies[m], s.energies[m - 1]);
            s.vectors.col(m).swap(s.vectors.col(m - 1));
        }
    for (int n = 0; n < kLevels; ++n) {
        double best = -1.0;
        int arg = 0;
        // Visit basis states by descending I_z, then S_z = +1/2 first.
        for (int m = 0; m < 8; ++m)
            for (int sidx = 0; sidx < 2; ++sidx) {
                int k = 8 * sidx + m;
                double a = std::abs(s.vectors(k, n));
                if (a > best + 1e-9) {
                    best = a;
                    arg = k;
                }
            }
        s.labels[n] = {0.5 - arg / 8, 3.5 - arg % 8};
    }
    return s;
}

void check_levels(int i, int j) {
    if (i < 0 || j < 0 || i >= kLevels || j >= kLevels)
        throw InvalidParameter("level index out of range: (" + std::to_string(i) + ", " + std::to_string(j) + ")");
    if (i == j) throw InvalidParameter("transition needs two distinct levels, got (" + std::to_string(i) + ", " +
                                       std::to_string(j) + ")");
}

double transition_frequency(const HyperfineSpectrum& spec, int i, int j) {
    check_levels(i, j);
    if (i > j) throw InvalidParameter("transition indices must satisfy i < j");
    return spec.energies[j] - spec.energies[i];
}

double s2_max_of(const Mat3& S2) {
    Eigen::SelfAdjointEigenSolver<Mat3> es(0.5 * (S2 + S2.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

namespace {

// Row n of U^dag M_k U for the three moment operators.
std::array<Eigen::Matrix<cplx, 1, 16>, 3> moment_rows(const MomentOperators& M, const Mat16c& U, int n) {
    std::array<Eigen::Matrix<cplx, 1, 16>, 3> rows;
    for (int k = 0; k < 3; ++k) rows[k] = (U.adjoint() * (M[k] * U.col(n))).adjoint();
    return rows;
}

void level_terms(const MomentOperators& M, const HyperfineSpectrum& s, int n, Vec3& grad, Mat3& hess) {
    auto rows = moment_rows(M, s.vectors, n);
    for (int k = 0; k < 3; ++k) grad[k] = rows[k](n).real();
    hess.setZero();
    for (int m = 0; m < kLevels; ++m) {
        if (m == n) continue;
        double inv = 1.0 / (s.energies[n] - s.energies[m]);
        for (int a = 0; a < 3; ++a)
            for (int b = a; b < 3; ++b) {
                // <n|Ma|m><m|Mb|n> = rows[a](m) * conj(rows[b](m))
                double t = 2.0 * (rows[a](m) * std::conj(rows[b](m))).real() * inv;
                hess(a, b) += t;
            }
    }
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < a; ++b) hess(a, b) = hess(b, a);
}

bool perturbative_valid(const MomentOperators& M, const HyperfineSpectrum& s, int n, const SensitivityOptions& opt) {
    auto rows = moment_rows(M, s.vectors, n);
    for (int m = 0; m < kLevels; ++m) {
        if (m == n) continue;
        double gap = std::abs(s.energies[n] - s.energies[m]);
        if (gap <= opt.gap_threshold_MHz) return false;
        if (opt.coupling_check) {
            double c = std::max({std::abs(rows[0](m)), std::abs(rows[1](m)), std::abs(rows[2](m))});
            if (gap <= opt.fd_step_mT * c) return false;
        }
    }
    return true;
}

double min_gap(const HyperfineSpectrum& s, int n) {
    double g = 1e300;
    for (int m = 0; m < kLevels; ++m)
        if (m != n) g = std::min(g, std::abs(s.energies[n] - s.energies[m]));
    return g;
}

}  // namespace

SensitivityProfile sensitivity_perturbative(const SpinSystem& sys, const HyperfineSpectrum& spec, int i, int j) {
    check_levels(i, j);
    Vec3 gi, gj;
    Mat3 hi, hj;
    level_terms(sys.moments(), spec, i, gi, hi);
    level_terms(sys.moments(), spec, j, gj, hj);
    SensitivityProfile p;
    p.i = i;
    p.j = j;
    p.S1 = (gj - gi) / 1000.0;
    p.S2 = 0.5 * (hj - hi) / 1000.0;
    p.s2_max = s2_max_of(p.S2);
    return p;
}

SensitivityProfile sensitivity_finite_difference(const SpinSystem& sys, const Vec3& B, int i, int j, double h) {
    check_levels(i, j);
    if (!(h > 0.0)) throw InvalidParameter("finite-difference step must be positive");
    // Refined eigenvalues; raw solver roundoff over h^2 swamps S2 at tesla fields.
    auto nu = [&](const Vec3& b) {
        auto e = sys.spectrum(b).energies;
        return e[j] - e[i];
    };
    const Mat3 E = Mat3::Identity();
    const double f0 = nu(B);
    Vec3 fp, fm;
    for (int k = 0; k < 3; ++k) {
        fp[k] = nu(B + h * E.col(k));
        fm[k] = nu(B - h * E.col(k));
    }
    SensitivityProfile p;
    p.i = i;
    p.j = j;
    p.finite_difference = true;
    Mat3 hess;
    for (int a = 0; a < 3; ++a) {
        p.S1[a] = (fp[a] - fm[a]) / (2 * h);
        hess(a, a) = (fp[a] - 2 * f0 + fm[a]) / (h * h);
        for (int b = a + 1; b < 3; ++b) {
            Vec3 da = h * E.col(a), db = h * E.col(b);
            double v = nu(B + da + db) - nu(B + da - db) - nu(B - da + db) + nu(B - da - db);
            hess(a, b) = hess(b, a) = v / (4 * h * h);
        }
    }
    p.S1 /= 1000.0;
    p.S2 = 0.5 * hess / 1000.0;
    if (!p.S2.allFinite() || !p.S1.allFinite()) throw NumericalError("finite differences produced non-finite values");
    p.s2_max = s2_max_of(p.S2);
    return p;
}

SensitivityProfile sensitivity(const SpinSystem& sys, const HyperfineSpectrum& spec, int i, int j,
                               const SensitivityOptions& opt) {
    check_levels(i, j);
    if (i > j) std::swap(i, j);
    if (min_gap(spec, i) < kExactDegeneracy || min_gap(spec, j) < kExactDegeneracy)
        throw DegeneratePoint("levels (" + std::to_string(i) + ", " + std::to_string(j) +
                              ") are degenerate at B = " + format_vec(spec.field) + " mT");
    SensitivityProfile p = sensitivity_perturbative(sys, spec, i, j);
    if (perturbative_valid(sys.moments(), spec, i, opt) && perturbative_valid(sys.moments(), spec, j, opt) &&
        p.S2.allFinite())
        return p;
    SensitivityProfile fd;
    try {
        fd = sensitivity_finite_difference(sys, spec.field, i, j, opt.fd_step_mT);
    } catch (const NumericalError& e) {
        throw DegeneratePoint(std::string("perturbative and finite-difference sensitivities both failed: ") + e.what());
    }
    // Hellmann-Feynman stays exact for non-degenerate levels.
    fd.S1 = p.S1;
    return fd;
}

SensitivityProfile sensitivity(const SpinSystem& sys, const Vec3& B, int i, int j, const SensitivityOptions& opt) {
    return sensitivity(sys, sys.spectrum(B), i, j, opt);
}

SensitivityProfile sensitivity(const SiteTensors& site, const Vec3& B, int i, int j, const SensitivityOptions& opt) {
    return sensitivity(SpinSystem(site), B, i, j, opt);
}

StrengthAxis parse_strength_axis(const std::string& s) {
    if (s == "D1") return StrengthAxis::D1;
    if (s == "D2") return StrengthAxis::D2;
    if (s == "b") return StrengthAxis::b;
    if (s == "norm") return StrengthAxis::norm;
    throw InvalidParameter("strength axis must be D1, D2, b or norm, got '" + s + "'");
}

std::string to_string(StrengthAxis a) {
    switch (a) {
        case StrengthAxis::D1: return "D1";
        case StrengthAxis::D2: return "D2";
        case StrengthAxis::b: return "b";
        case StrengthAxis::norm: return "norm";
    }
    return "?";
}

double transition_strength(const HyperfineSpectrum& spec, const SpinSystem& sys, int i, int j, StrengthAxis axis) {
    check_levels(i, j);
    const auto& U = spec.vectors;
    std::array<double, 3> m{};
    for (int k = 0; k < 3; ++k) m[k] = std::abs(U.col(i).dot(sys.moments()[k] * U.col(j)));
    double v = 0.0;
    switch (axis) {
        case StrengthAxis::D1: v = m[0]; break;
        case StrengthAxis::D2: v = m[1]; break;
        case StrengthAxis::b: v = m[2]; break;
        case StrengthAxis::norm: v = std::sqrt(m[0] * m[0] + m[1] * m[1] + m[2] * m[2]); break;
    }
    return v * 1000.0;
}

double transition_strength(const HyperfineSpectrum& spec, const SiteTensors& site, int i, int j, StrengthAxis axis) {
    return transition_strength(spec, SpinSystem(site), i, j, axis);
}

double electron_zeeman_splitting(const HyperfineSpectrum& spec) {
    return (spec.energies[kLevels - 1] - spec.energies[0]) / 1000.0;
}

Vec3 spherical_to_cartesian(const FieldSpherical& f) {
    double t = f.theta * kDeg, p = f.phi * kDeg;
    return f.B * Vec3(std::sin(t) * std::cos(p), std::sin(t) * std::sin(p), std::cos(t));
}

FieldSpherical cartesian_to_spherical(const Vec3& v) {
    FieldSpherical f;
    f.B = v.norm();
    if (f.B == 0.0) {
        f.degenerate = true;
        return f;
    }
    f.theta = std::atan2(std::hypot(v.x(), v.y()), v.z()) / kDeg;
    f.phi = std::atan2(v.y(), v.x()) / kDeg;
    if (f.phi <= -180.0) f.phi += 360.0;
    return f;
}

FieldSpherical signed_polar(const Vec3& v) {
    Vec3 w = v.z() < 0.0 ? Vec3(-v) : v;
    FieldSpherical f = cartesian_to_spherical(w);
    if (f.degenerate) return f;
    if (f.phi > 90.0) {
        f.phi -= 180.0;
        f.theta = -f.theta;
    } else if (f.phi <= -90.0) {
        f.phi += 180.0;
        f.theta = -f.theta;
    }
    return f;
}

}  // namespace erzefoz
