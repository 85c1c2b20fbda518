#pragma once

#include <string>
#include <vector>

#include "erzefoz/noise_model.hpp"
#include "erzefoz/zefoz_search.hpp"

namespace erzefoz {

// Maps an Er concentration to the field-fluctuation input of the T2 model.
struct FieldNoise {
    double y_mode_uT = 4.45;
    LatticeSpec lattice;
    NoiseCalibration calibration;
    Scalarization scalarization = Scalarization::worst_case_eig;
    bool include_host = true;

    double er_mode(double n_er_ppm) const;
    NoiseSummary summary(double n_er_ppm) const;
    T2Model model(double n_er_ppm) const;
};

FieldNoise field_noise(const Dataset& d, double y_mode_uT);

struct ConcentrationCurve {
    int i = 0, j = 0;
    Vec3 B = Vec3::Zero();
    std::vector<double> ppm;
    std::vector<double> t2_er_only;
    std::vector<double> t2_full;
    double t2_host_limit = 0.0;    // T2 with the Y bath alone
    double saturation_ppm = 0.0;   // T2_full >= 0.9 * host limit below this
};

std::vector<double> log_space(double lo, double hi, int n);

ConcentrationCurve concentration_sweep(const SpinSystem& sys, int i, int j, const std::vector<double>& ppm,
                                       const FieldNoise& noise, const Vec3& B = Vec3::Zero());

struct ZeroFieldMap {
    int site = 1;
    double n_er_ppm = 0.0;
    Eigen::Matrix<double, 16, 16> t2;   // upper triangle, NaN elsewhere
    Eigen::Matrix<double, 16, 16> frequency;
    double min_t2 = 0.0, max_t2 = 0.0;
    std::pair<int, int> argmin{0, 1}, argmax{0, 1};
    int finite_difference_pairs = 0;
};

ZeroFieldMap zero_field_t2_map(const SpinSystem& sys, double n_er_ppm, const FieldNoise& noise);

struct SweepPeak {
    double B = 0.0;     // mT
    double t2 = 0.0;    // s
    double fwhm = 0.0;  // mT, 0 when a half-maximum crossing lies outside the range
};

struct FieldSweep {
    int i = 0, j = 0;
    double theta = 0.0, phi = 0.0;
    std::vector<double> B;           // mT
    std::vector<double> frequency;   // MHz
    std::vector<double> dnu_dB;      // GHz/mT
    std::vector<double> t2;          // s
    std::vector<double> turning_points;   // mT
    std::vector<SweepPeak> peaks;
};

FieldSweep field_sweep_response(const SpinSystem& sys, int i, int j, double theta_deg, double phi_deg, double B_min,
                                double B_max, int steps, const T2Model& model, const SensitivityOptions& opt = {});

enum class ScanPlane { B_theta, B_phi, theta_phi };
ScanPlane parse_scan_plane(const std::string& s);
std::string to_string(ScanPlane p);

struct ScanAxis {
    std::string name;
    std::string unit;
    double min = 0.0, max = 0.0;
    int steps = 1;
    double value(int k) const { return steps > 1 ? min + (max - min) * k / (steps - 1) : min; }
};

struct ScanGrid2D {
    int site = 1, i = 0, j = 1;
    ScanPlane plane = ScanPlane::theta_phi;
    ScanAxis axis1, axis2;
    FieldSpherical center;
    Eigen::MatrixXd values;   // T2 in s, rows axis1
    double center_t2 = 0.0;
    double drop_radius = 0.0;  // axis units, one-decade drop, worst ray
    bool drop_found = false;
    bool resolution_warning = false;
    std::string warning;
};

ScanGrid2D tolerance_scan(const SpinSystem& sys, int i, int j, const Vec3& center, ScanPlane plane, double span1,
                          double span2, int steps1, int steps2, const T2Model& model, int workers = 0,
                          const SensitivityOptions& opt = {});

enum class TensorKind { A, Q, g_e };
TensorKind parse_tensor_kind(const std::string& s);
std::string to_string(TensorKind t);

struct AnisotropyMap {
    std::string tensor;
    std::vector<double> theta;   // deg, [0, 180]
    std::vector<double> phi;     // deg, [-180, 180]
    Eigen::MatrixXd values;      // rows theta
    double max_value = 0.0, min_value = 0.0;
    double max_theta = 0.0, max_phi = 0.0, min_theta = 0.0, min_phi = 0.0;
    Vec3 principal_values = Vec3::Zero();   // eigenvalues of M
};

double anisotropy_value(const Mat3& M, const Vec3& u);
AnisotropyMap anisotropy_map(const Mat3& M, int n_theta, int n_phi, const std::string& name = "M");
AnisotropyMap anisotropy_map(const SiteTensors& site, TensorKind t, int n_theta, int n_phi);

enum class FitKind { line, plane };
FitKind parse_fit_kind(const std::string& s);

struct GeometryFit {
    FitKind kind = FitKind::line;
    Vec3 vector = Vec3::UnitX();   // line direction or plane normal
    Vec3 centroid = Vec3::Zero();
    double rms_residual = 0.0;
    double inlier_cut = 0.0;
    double inlier_fraction = 0.0;
    Vec3 moments = Vec3::Zero();   // second-moment eigenvalues, ascending
    bool degenerate = false;
    std::string note;
};

// Total least squares; inlier_cut <= 0 selects 3x the rms residual.
GeometryFit fit_point_cloud(const std::vector<Vec3>& points, FitKind kind, double inlier_cut = 0.0);
// Converged points of one site within the cap, each replaced by its b >= 0 representative.
std::vector<Vec3> zefoz_cloud(const std::vector<ZefozPoint>& points, int site, double cap_mT = 3000.0);
double angle_between_axes_deg(const Vec3& a, const Vec3& b);

struct StrayFieldRow {
    double B = 0.0;      // mT along D1
    double t2_A = 0.0;   // s
    double t2_D = 0.0;
    bool fd_A = false, fd_D = false;
};

struct StrayFieldStudy {
    double n_er_ppm = 50.0;
    std::pair<int, int> A{0, 2}, D{7, 9};
    std::vector<StrayFieldRow> table;
    std::vector<StrayFieldRow> curve;
    double crossover_mT = 0.0;   // first field where T2(A) >= T2(D)
    bool crossover_found = false;
    double ratio_at_1mT = 0.0;   // T2(A) / T2(D)
};

StrayFieldStudy stray_field_study(const SpinSystem& site1, const FieldNoise& noise, double n_er_ppm = 50.0,
                                  double B_max = 1.0, int dense_steps = 201, const SensitivityOptions& opt = {});

}  // namespace erzefoz
