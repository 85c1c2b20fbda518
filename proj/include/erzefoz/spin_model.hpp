#pragma once

#include <array>
#include <string>

#include "erzefoz/dataset.hpp"
#include "erzefoz/types.hpp"

namespace erzefoz {

struct SpinOperators {
    std::array<Mat2c, 3> S;      // S = 1/2
    std::array<Mat8c, 3> I;      // I = 7/2
    std::array<Mat16c, 3> S16;   // S (x) 1_8
    std::array<Mat16c, 3> I16;   // 1_2 (x) I
};

SpinOperators build_spin_operators();

using HamiltonianMatrix = Mat16c;
using MomentOperators = std::array<Mat16c, 3>;   // dH/dB_k, MHz/mT

struct StateLabel {
    double s_z = 0.0;
    double i_z = 0.0;
    std::string str() const;
};

struct HyperfineSpectrum {
    Vec3 field = Vec3::Zero();   // mT
    Vec16 energies;              // MHz, ascending
    Mat16c vectors;              // columns are eigenvectors
    std::array<StateLabel, kLevels> labels;
};

// Zero-field part and moment operators, built once per site.
class SpinSystem {
public:
    explicit SpinSystem(const SiteTensors& site);

    const SiteTensors& site() const { return site_; }
    const Mat16c& zero_field() const { return h0_; }
    const MomentOperators& moments() const { return moments_; }

    HamiltonianMatrix hamiltonian(const Vec3& B) const;
    HyperfineSpectrum spectrum(const Vec3& B) const;

private:
    SiteTensors site_;
    Mat16c h0_;
    MomentOperators moments_;
};

HamiltonianMatrix build_hamiltonian(const SiteTensors& site, const Vec3& B);
HyperfineSpectrum diagonalize(const HamiltonianMatrix& H, const Vec3& B);
MomentOperators magnetic_moment_operators(const SiteTensors& site);

double transition_frequency(const HyperfineSpectrum& spec, int i, int j);

struct SensitivityOptions {
    double gap_threshold_MHz = 1e-3;
    double fd_step_mT = 0.01;
    // Perturbative sums also require |E_n - E_m| > fd_step * |<n|dH|m>|.
    bool coupling_check = true;
};

struct SensitivityProfile {
    int i = 0;
    int j = 1;
    Vec3 S1 = Vec3::Zero();   // GHz/mT
    Mat3 S2 = Mat3::Zero();   // GHz/mT^2, nu(B+d) ~ nu + S1.d + d.S2.d
    double s2_max = 0.0;
    bool finite_difference = false;
};

double s2_max_of(const Mat3& S2);

SensitivityProfile sensitivity(const SpinSystem& sys, const HyperfineSpectrum& spec, int i, int j,
                               const SensitivityOptions& opt = {});
SensitivityProfile sensitivity(const SpinSystem& sys, const Vec3& B, int i, int j,
                               const SensitivityOptions& opt = {});
SensitivityProfile sensitivity(const SiteTensors& site, const Vec3& B, int i, int j,
                               const SensitivityOptions& opt = {});

// Perturbative gradient and half-Hessian only, no validity checks.
SensitivityProfile sensitivity_perturbative(const SpinSystem& sys, const HyperfineSpectrum& spec, int i, int j);

// Central differences of sorted transition frequencies, step h in mT.
SensitivityProfile sensitivity_finite_difference(const SpinSystem& sys, const Vec3& B, int i, int j, double h);

enum class StrengthAxis { D1, D2, b, norm };
StrengthAxis parse_strength_axis(const std::string& s);
std::string to_string(StrengthAxis a);

// |<i|dH/dB|j>| in MHz/T; default projects on the b axis.
double transition_strength(const HyperfineSpectrum& spec, const SpinSystem& sys, int i, int j,
                           StrengthAxis axis = StrengthAxis::b);
double transition_strength(const HyperfineSpectrum& spec, const SiteTensors& site, int i, int j,
                           StrengthAxis axis = StrengthAxis::b);

// Total span E_15 - E_0 in GHz.
double electron_zeeman_splitting(const HyperfineSpectrum& spec);

struct FieldSpherical {
    double B = 0.0;       // mT
    double theta = 0.0;   // deg
    double phi = 0.0;     // deg
    bool degenerate = false;
};

Vec3 spherical_to_cartesian(const FieldSpherical& f);
FieldSpherical cartesian_to_spherical(const Vec3& v);

// Representative of {v, -v} with b >= 0, folded to theta in [-90, 90], phi in (-90, 90].
FieldSpherical signed_polar(const Vec3& v);

void check_levels(int i, int j);

}  // namespace erzefoz
