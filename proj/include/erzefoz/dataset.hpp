#pragma once

#include <map>
#include <string>
#include <vector>

#include "erzefoz/types.hpp"

namespace erzefoz {

struct SiteTensors {
    int site_id = 1;
    int orientation = 1;
    Mat3 A = Mat3::Zero();    // MHz
    Mat3 Q = Mat3::Zero();    // MHz
    Mat3 g_e = Mat3::Zero();
    double g_n = 0.0;
    double S = 0.5;
    double I = 3.5;
};

// Tensors of the C2(b)-related subsite: R M R^T with R = diag(-1, -1, 1).
SiteTensors c2_partner(const SiteTensors& site);

struct IsotopeData {
    std::string name;
    double abundance = 0.0;        // fraction
    double I = 0.0;
    double gamma_over_2pi = 0.0;   // MHz/T
    double g_n = 0.0;
    double mass = 0.0;             // u
};

struct LatticeSpec {
    double a = 14.411;   // A
    double b = 6.726;
    double c = 10.419;
    double beta_deg = 122.2;
    int n_Y_per_cell = 16;
    int n_Si_per_cell = 8;
    int n_O_per_cell = 40;

    double volume() const;       // A^3
    double y_density() const;    // A^-3
};

struct NoiseCalibration {
    double y_exclusion_A = 2.83;
    double er_exclusion_A = 3.4;
    double er_resonant_fraction = 0.25;
    double g_eff = 14.7;
    double er_analytic_scale = 0.192431;
};

struct Dataset {
    std::string version;
    std::string name;
    SiteTensors site1;
    SiteTensors site2;
    LatticeSpec lattice;
    std::vector<IsotopeData> isotopes;
    std::map<std::string, double> element_mass;
    NoiseCalibration noise;

    const SiteTensors& site(int id) const;
    const IsotopeData& isotope(const std::string& name) const;
};

Dataset parse_dataset(const std::string& text);
Dataset load_dataset_file(const std::string& path);
const std::string& builtin_dataset_text();
Dataset builtin_dataset();

void validate_site(const SiteTensors& site, double rel_tol = 1e-9);

}  // namespace erzefoz
