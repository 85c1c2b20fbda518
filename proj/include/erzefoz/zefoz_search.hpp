#pragma once

#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "erzefoz/spin_model.hpp"

namespace erzefoz {

struct RadialSegment {
    double start_mT = 0.0;
    double stop_mT = 0.0;
    double step_mT = 1.0;
    bool include_start = false;

    std::vector<double> magnitudes() const;
};

struct SearchConfig {
    int max_iterations = 230;
    double s1_tolerance = 1e-12;          // GHz/mT
    double field_cap_search_mT = 10000.0;
    double field_cap_report_mT = 3000.0;
    double domain_limit_mT = 20000.0;     // iterates beyond this are rejected
    std::vector<double> cartesian_axis_mT = {-25, -15, -5, 5, 15, 25};
    std::vector<RadialSegment> radial = {{0.0, 200.0, 8.6956, false}, {200.0, 20000.0, 1000.0, true}};
    int direction_set = 26;               // 6, 14 or 26
    double dedup_radius_mT = 0.5;
    double regularization = 1e-12;        // GHz/mT^2
    double condition_limit = 1e12;
    bool track_levels = true;
    double overlap_min = 0.5;
    int prune_after = 3;
    std::vector<std::pair<int, int>> transitions;   // empty: all 120
    std::vector<int> orientations = {1};
    StrengthAxis strength_axis = StrengthAxis::b;
    SensitivityOptions sensitivity;
    bool keep_failures = false;
    int workers = 0;

    void validate() const;
};

struct SeedPoint {
    Vec3 B;
    int group = 0;   // seeds sharing a grid line or radial ray
};

std::vector<Vec3> direction_set(int n);
std::vector<SeedPoint> generate_seed_points(const SearchConfig& cfg);
std::vector<Vec3> generate_seeds(const SearchConfig& cfg);

enum class Scalarization { worst_case_eig, isotropic_trace, directional };
Scalarization parse_scalarization(const std::string& s);
std::string to_string(Scalarization s);

struct T2Model {
    double dB_uT = 0.0;
    Scalarization scalarization = Scalarization::worst_case_eig;
    std::optional<double> T1_s;
    double extra_dephasing_Hz = 0.0;
    int directional_samples = 2000;
};

// Sentinel for unbounded T2.
constexpr double kUnboundedT2 = std::numeric_limits<double>::infinity();

double dephasing_rate_GHz(const SensitivityProfile& p, const T2Model& model);
double t2_from_sensitivities(const SensitivityProfile& p, const T2Model& model);

struct ZefozPoint {
    int site = 1;
    int orientation = 1;
    int i = 0;
    int j = 1;
    Vec3 B = Vec3::Zero();
    FieldSpherical B_spherical;
    double frequency = 0.0;   // MHz
    Vec3 S1 = Vec3::Zero();
    Mat3 S2 = Mat3::Zero();
    double s1_norm = 0.0;     // GHz/mT
    double s2_max = 0.0;      // GHz/mT^2
    double t2 = 0.0;          // s
    double strength = 0.0;    // MHz/T
    double zeeman_span_GHz = 0.0;
    int iterations = 0;
    bool converged = false;
    bool finite_difference = false;
    int seed_index = -1;
    int partner_neg = -1;     // index of the B -> -B partner
    int partner_c2 = -1;      // index of the C2(b) partner
};

struct RefineOutcome {
    ZefozPoint point;
    std::string status;   // converged, max_iterations, domain_exit, tracking_lost, degenerate, numerical
    double final_s1 = 0.0;
};

// One Newton update, B - (1/2) S2^-1 S1 with Tikhonov fallback.
Vec3 newton_delta(const SensitivityProfile& p, const SearchConfig& cfg);
Vec3 newton_step(const SpinSystem& sys, int i, int j, const Vec3& B, const SearchConfig& cfg = {});

RefineOutcome refine_to_zefoz(const SpinSystem& sys, int i, int j, const Vec3& seed, const SearchConfig& cfg,
                              const T2Model& model);

// Fills frequency, sensitivities, T2 and strength at a fixed field.
ZefozPoint evaluate_point(const SpinSystem& sys, int i, int j, const Vec3& B, const SearchConfig& cfg,
                          const T2Model& model);

std::vector<ZefozPoint> deduplicate(std::vector<ZefozPoint> points, double dedup_radius_mT);
void tag_partners(std::vector<ZefozPoint>& points, double radius_mT);
void canonical_sort(std::vector<ZefozPoint>& points);

struct SearchStats {
    std::size_t seeds = 0;
    std::size_t runs = 0;
    std::map<std::string, std::size_t> status_counts;
    std::size_t converged_before_dedup = 0;
    std::size_t pruned = 0;
};

struct SearchResult {
    std::vector<ZefozPoint> points;     // converged, deduplicated, canonical order
    std::vector<ZefozPoint> failures;   // only when keep_failures
    SearchStats stats;
};

SearchResult run_search(const SiteTensors& site, const SearchConfig& cfg, const T2Model& model);

struct TableRow {
    int i = 0;
    int j = 0;
    double t2 = 0.0;
    double strength = 0.0;
    double frequency = 0.0;
    FieldSpherical field;   // signed polar form
    std::size_t point_index = 0;
};

// Best transition per site and a Newton seed that reaches it.
struct ReferenceOptimum {
    int site = 1;
    int i = 0;
    int j = 1;
    Vec3 seed = Vec3::Zero();   // mT
};
ReferenceOptimum reference_optimum(int site);

std::vector<TableRow> rank_and_tabulate(const std::vector<ZefozPoint>& points, std::size_t top_n,
                                        double report_cap_mT = 3000.0);

}  // namespace erzefoz
