#include <doctest.h>

#include <cmath>

#include "erzefoz/constants.hpp"
#include "erzefoz/zefoz_search.hpp"

using namespace erzefoz;

namespace {

const Dataset& data() {
    static const Dataset d = builtin_dataset();
    return d;
}

ZefozPoint point(int i, int j, Vec3 B, double s1, int orientation = 1) {
    ZefozPoint p;
    p.i = i;
    p.j = j;
    p.B = B;
    p.s1_norm = s1;
    p.converged = true;
    p.orientation = orientation;
    return p;
}

}  // namespace

TEST_CASE("default seed grids") {
    SearchConfig cfg;
    CHECK(direction_set(6).size() == 6);
    CHECK(direction_set(14).size() == 14);
    CHECK(direction_set(26).size() == 26);
    for (const auto& d : direction_set(26)) CHECK(d.norm() == doctest::Approx(1.0));
    CHECK(cfg.radial[0].magnitudes().size() == 23);
    CHECK(cfg.radial[1].magnitudes().size() == 20);
    CHECK(cfg.radial[1].magnitudes().front() == doctest::Approx(200.0));
    CHECK(cfg.radial[1].magnitudes().back() == doctest::Approx(19200.0));
    auto seeds = generate_seed_points(cfg);
    CHECK(seeds.size() == 216 + (23 + 20) * 26);
    CHECK(generate_seeds(cfg).size() == seeds.size());
}

TEST_CASE("Newton step solves a quadratic surface in one step") {
    // nu(B) = nu0 + (B - B*).S2.(B - B*)  =>  S1 = 2 S2 (B - B*).
    Mat3 S2;
    S2 << 2e-7, 1e-8, 0, 1e-8, -1e-7, 3e-8, 0, 3e-8, 5e-8;
    const Vec3 Bstar(120.0, -45.0, 300.0), B(100.0, -30.0, 310.0);
    SensitivityProfile p;
    p.S2 = S2;
    p.S1 = 2.0 * S2 * (B - Bstar);
    Vec3 next = B + newton_delta(p, SearchConfig{});
    CHECK((next - Bstar).norm() < 1e-9);
}

TEST_CASE("singular curvature falls back to a bounded regularized step") {
    SensitivityProfile p;
    p.S2 = Vec3(1e-7, 0.0, 0.0).asDiagonal();
    p.S1 = Vec3(2e-7, 5e-9, 0.0);
    Vec3 d = newton_delta(p, SearchConfig{});
    CHECK(d.allFinite());
    CHECK(d.x() == doctest::Approx(-1.0));
    CHECK(std::abs(d.y()) < 1e-20);
}

TEST_CASE("ZEFOZ point is a fixed point of the Newton map") {
    SpinSystem sys(data().site(2));
    SearchConfig cfg;
    auto ref = reference_optimum(2);
    auto r = refine_to_zefoz(sys, ref.i, ref.j, ref.seed, cfg, T2Model{3.0});
    REQUIRE(r.status == "converged");
    CHECK((newton_step(sys, ref.i, ref.j, r.point.B, cfg) - r.point.B).norm() < 1e-9);
    CHECK(r.point.B.norm() == doctest::Approx(633.52).epsilon(1.0 / 633.52));
}

TEST_CASE("zero iterations never converge") {
    SpinSystem sys(data().site(2));
    SearchConfig cfg;
    cfg.max_iterations = 0;
    auto r = refine_to_zefoz(sys, 14, 15, Vec3(-378.98, 73.27, 502.35), cfg, T2Model{3.0});
    CHECK(r.status == "max_iterations");
    CHECK_FALSE(r.point.converged);
}

TEST_CASE("seeds far outside the domain are rejected") {
    SpinSystem sys(data().site(1));
    SearchConfig cfg;
    auto r = refine_to_zefoz(sys, 0, 15, Vec3(15000.0, 0.0, 0.0), cfg, T2Model{3.0});
    CHECK(r.status == "domain_exit");
    CHECK_FALSE(r.point.converged);
    CHECK_THROWS_AS(refine_to_zefoz(sys, 0, 15, Vec3(NAN, 0, 0), cfg, T2Model{}), InvalidParameter);
}

TEST_CASE("deduplication clusters within the radius and keeps the smallest S1") {
    std::vector<ZefozPoint> pts = {point(1, 2, Vec3(100, 0, 0), 1e-13), point(1, 2, Vec3(100.3, 0, 0), 1e-14),
                                   point(1, 2, Vec3(100.6, 0, 0), 1e-13),   // chains through the middle point
                                   point(1, 2, Vec3(200, 0, 0), 1e-13), point(1, 3, Vec3(100, 0, 0), 1e-13)};
    auto out = deduplicate(pts, 0.5);
    REQUIRE(out.size() == 3);
    int cluster = 0;
    for (const auto& p : out)
        if (p.i == 1 && p.j == 2 && p.B.x() < 150) {
            ++cluster;
            CHECK(p.s1_norm == 1e-14);
        }
    CHECK(cluster == 1);
}

TEST_CASE("partners under inversion and C2 are tagged") {
    std::vector<ZefozPoint> pts = {point(4, 5, Vec3(10, 20, 30), 0), point(4, 5, Vec3(-10, -20, -30), 0),
                                   point(4, 5, Vec3(-10, -20, 30), 0, 2)};
    tag_partners(pts, 0.5);
    CHECK(pts[0].partner_neg == 1);
    CHECK(pts[1].partner_neg == 0);
    CHECK(pts[0].partner_c2 == 2);
    CHECK(pts[2].partner_c2 == 0);
    CHECK(pts[2].partner_neg == -1);
}

TEST_CASE("ranking handles empty input and the report cap") {
    CHECK(rank_and_tabulate({}, 10).empty());
    std::vector<ZefozPoint> pts = {point(1, 2, Vec3(0, 0, 4000), 0), point(1, 3, Vec3(0, 0, -500), 0),
                                   point(2, 3, Vec3(0, 0, 100), 0)};
    pts[0].t2 = 100;
    pts[1].t2 = 50;
    pts[2].t2 = 70;
    auto rows = rank_and_tabulate(pts, 10, 3000.0);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].t2 == 70);
    CHECK(rows[1].field.B == doctest::Approx(500.0));
}

TEST_CASE("T2 model limits") {
    SensitivityProfile p;
    CHECK(t2_from_sensitivities(p, T2Model{3.0}) == kUnboundedT2);
    p.S1 = Vec3(1e-6, 0, 0);
    T2Model m{3.0};
    // 1 / (pi T2) = |S1| 2 dB with dB in mT and rates in GHz.
    CHECK(t2_from_sensitivities(p, m) == doctest::Approx(1.0 / (constants::kPi * 1e-6 * 2 * 3e-3 * 1e9)));
    m.T1_s = 1.0;
    CHECK(t2_from_sensitivities(p, m) < t2_from_sensitivities(p, T2Model{3.0}));
    m.T1_s = -1.0;
    CHECK_THROWS_AS(t2_from_sensitivities(p, m), InvalidParameter);
    CHECK_THROWS_AS(t2_from_sensitivities(p, T2Model{-1.0}), InvalidParameter);
}

TEST_CASE("search is deterministic across worker counts") {
    SearchConfig cfg;
    cfg.transitions = {{12, 13}, {13, 14}};
    cfg.radial = {{0.0, 600.0, 100.0, false}};
    cfg.workers = 1;
    auto a = run_search(data().site(2), cfg, T2Model{3.0});
    cfg.workers = 2;
    auto b = run_search(data().site(2), cfg, T2Model{3.0});
    REQUIRE(a.points.size() == b.points.size());
    CHECK(!a.points.empty());
    for (std::size_t k = 0; k < a.points.size(); ++k) {
        CHECK(a.points[k].B == b.points[k].B);
        CHECK(a.points[k].t2 == b.points[k].t2);
    }
}

TEST_CASE("invalid search configurations are rejected") {
    SearchConfig cfg;
    cfg.direction_set = 8;
    CHECK_THROWS_AS(cfg.validate(), InvalidParameter);
    cfg = SearchConfig{};
    cfg.transitions = {{3, 3}};
    CHECK_THROWS_AS(cfg.validate(), InvalidParameter);
    cfg = SearchConfig{};
    cfg.max_iterations = -1;
    CHECK_THROWS_AS(cfg.validate(), InvalidParameter);
}
