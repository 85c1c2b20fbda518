#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "erzefoz/dataset.hpp"
#include "erzefoz/types.hpp"

namespace erzefoz {

enum class BathKind { host_Y, dopant_Er };
BathKind parse_bath_kind(const std::string& s);
std::string to_string(BathKind k);

struct BathSpin {
    Vec3 position;   // A
    Vec3 moment;     // J/T
    int subsite = 0; // 0: same site and subsite as the probe
};
using Bath = std::vector<BathSpin>;

struct FluctuationSample {
    Vec3 dB = Vec3::Zero();   // uT
    double magnitude = 0.0;   // uT
};

struct Histogram {
    std::vector<double> edges;   // uT
    std::vector<double> counts;

    double bin_width() const { return edges.size() > 1 ? edges[1] - edges[0] : 0.0; }
    double center(std::size_t k) const { return 0.5 * (edges[k] + edges[k + 1]); }
};

struct MaxwellBoltzmannFit {
    double sigma = 0.0;   // uT
    double mode = 0.0;    // uT, sigma * sqrt(2)
    double fwhm = 0.0;    // uT
    double amplitude = 0.0;
    double r_squared = 0.0;
    double argmax = 0.0;  // raw histogram argmax, uT
    bool failed = false;
    Histogram histogram;
};

MaxwellBoltzmannFit fit_maxwell_boltzmann(const std::vector<double>& magnitudes, int bins = 60);
double maxwell_boltzmann_fwhm(double sigma);

struct FluctuationDistribution {
    BathKind kind = BathKind::host_Y;
    double n_er_ppm = 0.0;
    std::uint64_t seed = 0;
    std::size_t n_samples = 0;
    double bath_radius_A = 0.0;
    bool radius_converged = true;
    std::vector<double> samples;   // |dB|, uT
    Histogram histogram;
    double mb_sigma = 0.0;
    double mode = 0.0;
    double fwhm = 0.0;
    double argmax_mode = 0.0;
    double fit_r_squared = 0.0;
    bool fit_failed = false;
};

struct NoiseSettings {
    LatticeSpec lattice;
    IsotopeData yttrium;
    NoiseCalibration calibration;
    SiteTensors probe;       // Er tensors of the probe site
    SiteTensors other_site;
    bool er_resonant_only = true;
    double radius_factor = 10.0;    // initial bath radius in mean spacings
    int max_doublings = 4;
    double radius_tolerance = 0.01; // relative mode shift
    int histogram_bins = 60;
    int workers = 0;
};

NoiseSettings noise_settings(const Dataset& d, int site_id);

Bath generate_y_bath(const LatticeSpec& lattice, double radius_A, std::uint64_t seed, const IsotopeData& y,
                     double exclusion_A);
Bath generate_er_bath(const LatticeSpec& lattice, double n_er_ppm, double radius_A, const SiteTensors& site,
                      std::uint64_t seed, const NoiseSettings& settings);

FluctuationSample dipole_field_sum(const Bath& bath, double exclusion_A = 0.0);

FluctuationDistribution run_fluctuation_mc(BathKind kind, double n_er_ppm, std::size_t n_samples,
                                           std::uint64_t seed, const NoiseSettings& settings);

double er_spacing(double n_er_ppm, const LatticeSpec& lattice);
double weight_to_number_ppm(double weight_ppm, const Dataset& d);
double weight_to_number_factor(const Dataset& d);

// Point-dipole estimate 2 mu0 muB g_eff / (4 pi r^3), uT.
double literal_er_fluctuation(double n_er_ppm, const LatticeSpec& lattice, double g_eff);
// Literal estimate times the calibrated prefactor, uT.
double analytic_er_fluctuation(double n_er_ppm, const LatticeSpec& lattice, const NoiseCalibration& cal);

struct FrozenCore {
    double n_ppm = 0.0;
    double radius_A = 0.0;
    double y_count = 0.0;
};
FrozenCore frozen_core(double dB_y_mode, const LatticeSpec& lattice, const NoiseCalibration& cal);

struct NoiseSummary {
    double y_mode = 0.0;    // uT
    double er_mode = 0.0;   // uT
    double total_mode = 0.0;
    double sigma = 0.0;     // per-component, total_mode / sqrt(2)
};
NoiseSummary combine_noise(double y_mode, double er_mode);

}  // namespace erzefoz
