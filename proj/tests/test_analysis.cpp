#include <doctest.h>

#include <cmath>
#include <random>

#include "erzefoz/analysis.hpp"

using namespace erzefoz;

namespace {

const Dataset& data() {
    static const Dataset d = builtin_dataset();
    return d;
}

}  // namespace

TEST_CASE("anisotropy map of a diagonal tensor peaks on its principal axes") {
    Mat3 M = Vec3(1.0, 2.0, 5.0).asDiagonal();
    auto m = anisotropy_map(M, 37, 73);
    CHECK(m.max_value == doctest::Approx(5.0));
    CHECK(m.min_value == doctest::Approx(1.0));
    CHECK(std::min(m.max_theta, 180.0 - m.max_theta) == doctest::Approx(0.0));
    CHECK(m.min_theta == doctest::Approx(90.0));
    CHECK(std::abs(std::sin(m.min_phi * M_PI / 180.0)) < 1e-12);
    CHECK(m.principal_values[2] == doctest::Approx(5.0));
}

TEST_CASE("isotropic tensors give flat maps and u -> -u symmetry holds") {
    auto flat = anisotropy_map(Mat3(3.0 * Mat3::Identity()), 19, 37);
    CHECK(flat.values.maxCoeff() - flat.values.minCoeff() < 1e-12);
    const Mat3& g = data().site(1).g_e;
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n;
    for (int k = 0; k < 20; ++k) {
        Vec3 u = Vec3(n(rng), n(rng), n(rng)).normalized();
        CHECK(anisotropy_value(g, u) == doctest::Approx(anisotropy_value(g, -u)));
    }
}

TEST_CASE("line fit of collinear points has zero residual") {
    std::vector<Vec3> pts;
    const Vec3 d = Vec3(1.0, -2.0, 0.5).normalized(), c(10, 20, 30);
    for (int k = -5; k <= 5; ++k) pts.push_back(c + 7.0 * k * d);
    auto f = fit_point_cloud(pts, FitKind::line);
    CHECK(f.rms_residual < 1e-9);
    CHECK(angle_between_axes_deg(f.vector, d) < 1e-6);
    CHECK(f.vector.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f.vector[0] > 0.0);
    auto p = fit_point_cloud(pts, FitKind::plane);
    CHECK(p.degenerate);
}

TEST_CASE("plane fit recovers the normal of a noisy plane within 1 degree") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-100.0, 100.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    const Vec3 nrm = Vec3(0.702, 0.532, -0.471).normalized();
    Vec3 e1 = nrm.unitOrthogonal(), e2 = nrm.cross(e1);
    std::vector<Vec3> pts;
    for (int k = 0; k < 400; ++k) pts.push_back(u(rng) * e1 + u(rng) * e2 + noise(rng) * nrm);
    auto f = fit_point_cloud(pts, FitKind::plane);
    CHECK_FALSE(f.degenerate);
    CHECK(angle_between_axes_deg(f.vector, nrm) < 1.0);
    CHECK(f.inlier_fraction > 0.95);
    CHECK_THROWS_AS(fit_point_cloud({Vec3::Zero(), Vec3::UnitX()}, FitKind::plane), InvalidParameter);
}

TEST_CASE("zefoz cloud keeps one representative per inversion pair") {
    ZefozPoint a, b, c;
    a.B = Vec3(10, 0, 5);
    b.B = Vec3(-10, 0, -5);
    c.B = Vec3(0, 0, -4000);
    for (auto* p : {&a, &b, &c}) p->converged = true;
    a.partner_neg = 1;
    b.partner_neg = 0;
    auto cloud = zefoz_cloud({a, b, c}, 1, 3000.0);
    REQUIRE(cloud.size() == 1);
    CHECK(cloud[0] == a.B);
}

TEST_CASE("Er-limited T2 scales as 1/n^2 at zero field") {
    SpinSystem sys(data().site(1));
    FieldNoise fn = field_noise(data(), 4.45);
    auto c = concentration_sweep(sys, 7, 9, {10.0, 100.0, 1000.0}, fn);
    CHECK(c.t2_er_only[0] / c.t2_er_only[1] == doctest::Approx(100.0).epsilon(1e-9));
    CHECK(c.t2_er_only[1] / c.t2_er_only[2] == doctest::Approx(100.0).epsilon(1e-9));
    for (std::size_t k = 0; k < 3; ++k) CHECK(c.t2_full[k] <= c.t2_er_only[k]);
    CHECK(c.t2_full[0] <= c.t2_host_limit);
    CHECK(c.saturation_ppm > 0.0);
}

TEST_CASE("zero-field map covers the upper triangle") {
    SpinSystem sys(data().site(2));
    auto m = zero_field_t2_map(sys, 10.0, field_noise(data(), 4.45));
    int finite = 0;
    for (int i = 0; i < kLevels; ++i)
        for (int j = 0; j < kLevels; ++j) {
            if (j > i) {
                CHECK(std::isfinite(m.t2(i, j)));
                ++finite;
            } else {
                CHECK(std::isnan(m.t2(i, j)));
            }
        }
    CHECK(finite == 120);
    CHECK(m.max_t2 >= m.min_t2);
    CHECK(m.t2(m.argmax.first, m.argmax.second) == m.max_t2);
}

TEST_CASE("field sweep finds the site 2 turning point") {
    SpinSystem sys(data().site(2));
    auto ref = reference_optimum(2);
    auto r = refine_to_zefoz(sys, ref.i, ref.j, ref.seed, SearchConfig{}, T2Model{3.0});
    REQUIRE(r.status == "converged");
    auto sp = cartesian_to_spherical(r.point.B);
    auto s = field_sweep_response(sys, 14, 15, sp.theta, sp.phi, 600.0, 660.0, 121, T2Model{3.0});
    REQUIRE(s.turning_points.size() == 1);
    CHECK(s.turning_points[0] == doctest::Approx(sp.B).epsilon(0.01 / 633.0));
    REQUIRE(s.peaks.size() == 1);
    CHECK(s.peaks[0].B == doctest::Approx(sp.B).epsilon(0.01 / 633.0));
    CHECK(s.peaks[0].fwhm > 0.0);
}

TEST_CASE("tolerance scan is centered and validates its grid") {
    SpinSystem sys(data().site(2));
    auto ref = reference_optimum(2);
    auto r = refine_to_zefoz(sys, ref.i, ref.j, ref.seed, SearchConfig{}, T2Model{3.0});
    auto g = tolerance_scan(sys, 14, 15, r.point.B, ScanPlane::theta_phi, 0.02, 0.02, 41, 41, T2Model{3.0}, 2);
    CHECK(g.values.rows() == 41);
    CHECK(g.values(20, 20) == doctest::Approx(g.center_t2).epsilon(1e-6));
    CHECK(g.values.maxCoeff() <= g.center_t2 * 1.05);
    CHECK(g.drop_found);
    CHECK_THROWS_AS(tolerance_scan(sys, 14, 15, r.point.B, ScanPlane::theta_phi, 0.0, 0.02, 41, 41, T2Model{3.0}),
                    UsageError);
    CHECK_THROWS_AS(tolerance_scan(sys, 14, 15, r.point.B, ScanPlane::B_phi, 1.0, 0.02, 2, 41, T2Model{3.0}),
                    UsageError);
}

TEST_CASE("log_space endpoints") {
    auto v = log_space(0.01, 1e4, 7);
    CHECK(v.front() == doctest::Approx(0.01));
    CHECK(v.back() == doctest::Approx(1e4));
    CHECK(v[3] == doctest::Approx(10.0));
    CHECK_THROWS_AS(log_space(0.0, 1.0, 3), InvalidParameter);
}
