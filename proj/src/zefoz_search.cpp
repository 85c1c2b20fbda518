#include "erzefoz/zefoz_search.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "erzefoz/constants.hpp"
#include "erzefoz/parallel.hpp"

namespace erzefoz {

std::vector<double> RadialSegment::magnitudes() const {
    std::vector<double> out;
    if (!(step_mT > 0.0)) throw InvalidParameter("radial step must be positive");
    for (int k = include_start ? 0 : 1;; ++k) {
        double v = start_mT + k * step_mT;
        if (v > stop_mT * (1 + 1e-12)) break;
        if (v > 0.0) out.push_back(v);
    }
    return out;
}

void SearchConfig::validate() const {
    if (max_iterations < 0) throw InvalidParameter("max_iterations must be non-negative");
    if (!(s1_tolerance > 0.0)) throw InvalidParameter("s1_tolerance must be positive");
    if (!(field_cap_report_mT > 0.0) || field_cap_report_mT > field_cap_search_mT)
        throw InvalidParameter("report cap must be positive and not exceed the search cap");
    if (domain_limit_mT < field_cap_search_mT) throw InvalidParameter("domain limit must be at least the search cap");
    if (!(dedup_radius_mT > 0.0)) throw InvalidParameter("dedup_radius must be positive");
    if (regularization < 0.0) throw InvalidParameter("regularization must be non-negative");
    if (overlap_min <= 0.0 || overlap_min > 1.0) throw InvalidParameter("overlap_min must lie in (0, 1]");
    if (direction_set != 6 && direction_set != 14 && direction_set != 26)
        throw InvalidParameter("direction_set must be 6, 14 or 26");
    for (auto [i, j] : transitions) {
        check_levels(i, j);
        if (i > j) throw InvalidParameter("transitions must be listed as i < j");
    }
    for (int o : orientations)
        if (o != 1 && o != 2) throw InvalidParameter("orientation must be 1 or 2");
}

std::vector<Vec3> direction_set(int n) {
    std::vector<Vec3> dirs;
    for (int x = -1; x <= 1; ++x)
        for (int y = -1; y <= 1; ++y)
            for (int z = -1; z <= 1; ++z) {
                int nz = std::abs(x) + std::abs(y) + std::abs(z);
                if (nz == 0) continue;
                bool keep = n == 26 || (n == 6 && nz == 1) || (n == 14 && (nz == 1 || nz == 3));
                if (keep) dirs.push_back(Vec3(x, y, z).normalized());
            }
    if (dirs.empty()) throw InvalidParameter("direction_set must be 6, 14 or 26");
    return dirs;
}

std::vector<SeedPoint> generate_seed_points(const SearchConfig& cfg) {
    std::vector<SeedPoint> seeds;
    int group = 0;
    const auto& ax = cfg.cartesian_axis_mT;
    for (double x : ax) {
        for (double y : ax) {
            for (double z : ax) seeds.push_back({Vec3(x, y, z), group});
            ++group;
        }
    }
    if (cfg.radial.empty()) return seeds;
    const auto dirs = direction_set(cfg.direction_set);
    for (const auto& seg : cfg.radial) {
        auto mags = seg.magnitudes();
        if (mags.empty()) continue;
        for (const auto& d : dirs) {
            for (double m : mags) seeds.push_back({m * d, group});
            ++group;
        }
    }
    return seeds;
}

std::vector<Vec3> generate_seeds(const SearchConfig& cfg) {
    std::vector<Vec3> out;
    for (const auto& s : generate_seed_points(cfg)) out.push_back(s.B);
    return out;
}

Scalarization parse_scalarization(const std::string& s) {
    if (s == "worst_case_eig") return Scalarization::worst_case_eig;
    if (s == "isotropic_trace") return Scalarization::isotropic_trace;
    if (s == "directional") return Scalarization::directional;
    throw InvalidParameter("scalarization must be worst_case_eig, isotropic_trace or directional");
}

std::string to_string(Scalarization s) {
    switch (s) {
        case Scalarization::worst_case_eig: return "worst_case_eig";
        case Scalarization::isotropic_trace: return "isotropic_trace";
        case Scalarization::directional: return "directional";
    }
    return "?";
}

double dephasing_rate_GHz(const SensitivityProfile& p, const T2Model& model) {
    if (!(model.dB_uT >= 0.0)) throw InvalidParameter("dB_total must be non-negative");
    const double x = model.dB_uT * 1e-3;   // mT
    const double s1 = p.S1.norm();
    switch (model.scalarization) {
        case Scalarization::worst_case_eig: return s1 * 2 * x + 4 * x * x * p.s2_max;
        case Scalarization::isotropic_trace: {
            Eigen::SelfAdjointEigenSolver<Mat3> es(p.S2, Eigen::EigenvaluesOnly);
            return s1 * 2 * x + 4 * x * x * es.eigenvalues().cwiseAbs().sum() / 3.0;
        }
        case Scalarization::directional: {
            // Fibonacci sphere average of |S1.d + d.S2.d| with |d| = 2 dB.
            const int n = std::max(model.directional_samples, 16);
            const double golden = constants::kPi * (3.0 - std::sqrt(5.0));
            double acc = 0.0;
            for (int k = 0; k < n; ++k) {
                double z = 1.0 - (2.0 * k + 1.0) / n;
                double r = std::sqrt(1.0 - z * z);
                Vec3 u(r * std::cos(golden * k), r * std::sin(golden * k), z);
                Vec3 d = 2 * x * u;
                acc += std::abs(p.S1.dot(d) + d.dot(p.S2 * d));
            }
            return acc / n;
        }
    }
    return 0.0;
}

double t2_from_sensitivities(const SensitivityProfile& p, const T2Model& model) {
    double rate_hz = dephasing_rate_GHz(p, model) * 1e9 + model.extra_dephasing_Hz;
    if (model.T1_s) {
        if (!(*model.T1_s > 0.0)) throw InvalidParameter("T1 must be positive");
        rate_hz += 1.0 / (2 * constants::kPi * *model.T1_s);
    }
    if (rate_hz <= 0.0) return kUnboundedT2;
    return 1.0 / (constants::kPi * rate_hz);
}

Vec3 newton_delta(const SensitivityProfile& p, const SearchConfig& cfg) {
    Eigen::SelfAdjointEigenSolver<Mat3> es(0.5 * (p.S2 + p.S2.transpose()));
    const Vec3 ev = es.eigenvalues();
    const Mat3 V = es.eigenvectors();
    const double amax = ev.cwiseAbs().maxCoeff();
    const double amin = ev.cwiseAbs().minCoeff();
    const Vec3 g = V.transpose() * p.S1;
    Vec3 c;
    bool regularize = amax == 0.0 || amin * cfg.condition_limit < amax;
    const double l2 = cfg.regularization * cfg.regularization;
    for (int k = 0; k < 3; ++k) {
        if (regularize) {
            double den = ev[k] * ev[k] + l2;
            c[k] = den > 0.0 ? ev[k] * g[k] / den : 0.0;
        } else {
            c[k] = g[k] / ev[k];
        }
    }
    return -0.5 * (V * c);
}

Vec3 newton_step(const SpinSystem& sys, int i, int j, const Vec3& B, const SearchConfig& cfg) {
    auto spec = sys.spectrum(B);
    auto p = sensitivity_perturbative(sys, spec, i, j);
    if (p.S1.norm() < cfg.s1_tolerance) return B;
    Vec3 next = B + newton_delta(p, cfg);
    if (!next.allFinite() || next.norm() > cfg.domain_limit_mT)
        throw OutOfDomain("Newton step leaves the search domain at " + format_vec(next) + " mT");
    return next;
}

ZefozPoint evaluate_point(const SpinSystem& sys, int i, int j, const Vec3& B, const SearchConfig& cfg,
                          const T2Model& model) {
    ZefozPoint pt;
    pt.site = sys.site().site_id;
    pt.orientation = sys.site().orientation;
    pt.i = i;
    pt.j = j;
    pt.B = B;
    pt.B_spherical = cartesian_to_spherical(B);
    auto spec = sys.spectrum(B);
    pt.frequency = transition_frequency(spec, i, j);
    auto p = sensitivity(sys, spec, i, j, cfg.sensitivity);
    pt.S1 = p.S1;
    pt.S2 = p.S2;
    pt.s1_norm = p.S1.norm();
    pt.s2_max = p.s2_max;
    pt.finite_difference = p.finite_difference;
    pt.t2 = t2_from_sensitivities(p, model);
    pt.strength = transition_strength(spec, sys, i, j, cfg.strength_axis);
    pt.zeeman_span_GHz = electron_zeeman_splitting(spec);
    return pt;
}

namespace {

int best_overlap(const Mat16c& U, const Vec16c& v, double& value) {
    int arg = 0;
    value = -1.0;
    for (int n = 0; n < kLevels; ++n) {
        double o = std::norm(U.col(n).dot(v));
        if (o > value) {
            value = o;
            arg = n;
        }
    }
    return arg;
}

}  // namespace

RefineOutcome refine_to_zefoz(const SpinSystem& sys, int i, int j, const Vec3& seed, const SearchConfig& cfg,
                              const T2Model& model) {
    check_levels(i, j);
    if (!seed.allFinite()) throw InvalidParameter("seed must be finite");
    if (i > j) std::swap(i, j);
    RefineOutcome out;
    out.point.site = sys.site().site_id;
    out.point.orientation = sys.site().orientation;
    out.point.i = i;
    out.point.j = j;
    out.point.B = seed;
    out.point.B_spherical = cartesian_to_spherical(seed);

    Vec3 B = seed;
    int it = 0;
    try {
        auto spec = sys.spectrum(B);
        for (;;) {
            auto p = sensitivity_perturbative(sys, spec, i, j);
            out.final_s1 = p.S1.norm();
            out.point.s1_norm = out.final_s1;
            if (cfg.max_iterations > 0 && out.final_s1 < cfg.s1_tolerance) {
                if (B.norm() >= cfg.field_cap_search_mT) {
                    out.status = "domain_exit";
                    break;
                }
                out.point = evaluate_point(sys, i, j, B, cfg, model);
                out.point.converged = out.point.s1_norm < cfg.s1_tolerance;
                out.point.iterations = it;
                out.status = out.point.converged ? "converged" : "degenerate";
                return out;
            }
            if (it >= cfg.max_iterations) {
                out.status = "max_iterations";
                break;
            }
            Vec3 next = B + newton_delta(p, cfg);
            ++it;
            if (!next.allFinite() || next.norm() > cfg.domain_limit_mT) {
                out.status = "domain_exit";
                break;
            }
            auto nspec = sys.spectrum(next);
            if (cfg.track_levels) {
                double oi = 0, oj = 0;
                int ni = best_overlap(nspec.vectors, spec.vectors.col(i), oi);
                int nj = best_overlap(nspec.vectors, spec.vectors.col(j), oj);
                if (oi < cfg.overlap_min || oj < cfg.overlap_min || ni == nj) {
                    B = next;
                    out.status = "tracking_lost";
                    break;
                }
                i = std::min(ni, nj);
                j = std::max(ni, nj);
            }
            B = next;
            spec = std::move(nspec);
        }
    } catch (const DegeneratePoint&) {
        out.status = "degenerate";
    } catch (const NumericalError&) {
        out.status = "numerical";
    }
    out.point.i = i;
    out.point.j = j;
    out.point.B = B;
    out.point.B_spherical = cartesian_to_spherical(B);
    out.point.iterations = it;
    out.point.converged = false;
    return out;
}

namespace {

auto key_of(const ZefozPoint& p) { return std::make_tuple(p.site, p.orientation, p.i, p.j); }

bool canonical_less(const ZefozPoint& a, const ZefozPoint& b) {
    if (key_of(a) != key_of(b)) return key_of(a) < key_of(b);
    for (int k = 0; k < 3; ++k)
        if (a.B[k] != b.B[k]) return a.B[k] < b.B[k];
    return a.seed_index < b.seed_index;
}

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t x) {
    while (parent[x] != x) {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    return x;
}

}  // namespace

void canonical_sort(std::vector<ZefozPoint>& points) { std::sort(points.begin(), points.end(), canonical_less); }

std::vector<ZefozPoint> deduplicate(std::vector<ZefozPoint> points, double radius) {
    canonical_sort(points);
    const std::size_t n = points.size();
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    for (std::size_t a = 0; a < n;) {
        std::size_t b = a;
        while (b < n && key_of(points[b]) == key_of(points[a])) ++b;
        for (std::size_t x = a; x < b; ++x)
            for (std::size_t y = x + 1; y < b; ++y)
                if ((points[x].B - points[y].B).norm() < radius) {
                    std::size_t rx = find_root(parent, x), ry = find_root(parent, y);
                    if (rx != ry) parent[std::max(rx, ry)] = std::min(rx, ry);
                }
        a = b;
    }
    std::vector<std::size_t> best(n, n);
    for (std::size_t x = 0; x < n; ++x) {
        std::size_t r = find_root(parent, x);
        std::size_t& cur = best[r];
        if (cur == n || points[x].s1_norm < points[cur].s1_norm) cur = x;
    }
    std::vector<ZefozPoint> out;
    for (std::size_t r = 0; r < n; ++r)
        if (best[r] != n) out.push_back(points[best[r]]);
    canonical_sort(out);
    tag_partners(out, radius);
    return out;
}

void tag_partners(std::vector<ZefozPoint>& pts, double radius) {
    const Vec3 c2(-1.0, -1.0, 1.0);
    for (auto& p : pts) p.partner_neg = p.partner_c2 = -1;
    for (std::size_t a = 0; a < pts.size(); ++a) {
        for (std::size_t b = 0; b < pts.size(); ++b) {
            if (a == b || pts[a].site != pts[b].site || pts[a].i != pts[b].i || pts[a].j != pts[b].j) continue;
            if (pts[a].orientation == pts[b].orientation) {
                if (pts[a].partner_neg < 0 && (pts[a].B + pts[b].B).norm() < radius)
                    pts[a].partner_neg = static_cast<int>(b);
            } else if (pts[a].partner_c2 < 0 && (pts[a].B.cwiseProduct(c2) - pts[b].B).norm() < radius) {
                pts[a].partner_c2 = static_cast<int>(b);
            }
        }
    }
}

SearchResult run_search(const SiteTensors& site, const SearchConfig& cfg, const T2Model& model) {
    cfg.validate();
    const auto seeds = generate_seed_points(cfg);
    std::vector<std::pair<int, int>> pairs = cfg.transitions;
    if (pairs.empty())
        for (int i = 0; i < kLevels; ++i)
            for (int j = i + 1; j < kLevels; ++j) pairs.emplace_back(i, j);

    std::vector<SpinSystem> systems;
    for (int o : cfg.orientations) systems.emplace_back(o == site.orientation ? site : c2_partner(site));

    struct Task {
        std::size_t system;
        int i, j;
    };
    std::vector<Task> tasks;
    for (std::size_t s = 0; s < systems.size(); ++s)
        for (auto [i, j] : pairs) tasks.push_back({s, i, j});

    struct TaskResult {
        std::vector<ZefozPoint> converged, failures;
        std::map<std::string, std::size_t> counts;
        std::size_t pruned = 0, runs = 0;
    };
    std::vector<TaskResult> results(tasks.size());

    parallel_for(tasks.size(), cfg.workers, [&](std::size_t t) {
        const auto& task = tasks[t];
        auto& res = results[t];
        int lost_streak = 0, streak_group = -1;
        bool group_pruned = false;
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            if (seeds[s].group != streak_group) {
                streak_group = seeds[s].group;
                lost_streak = 0;
                group_pruned = false;
            }
            if (group_pruned) {
                ++res.pruned;
                continue;
            }
            auto o = refine_to_zefoz(systems[task.system], task.i, task.j, seeds[s].B, cfg, model);
            ++res.runs;
            o.point.seed_index = static_cast<int>(s);
            ++res.counts[o.status];
            lost_streak = o.status == "tracking_lost" ? lost_streak + 1 : 0;
            if (cfg.prune_after > 0 && lost_streak >= cfg.prune_after) group_pruned = true;
            if (o.point.converged)
                res.converged.push_back(o.point);
            else if (cfg.keep_failures)
                res.failures.push_back(o.point);
        }
    });

    SearchResult out;
    out.stats.seeds = seeds.size();
    std::vector<ZefozPoint> all;
    for (auto& r : results) {
        out.stats.runs += r.runs;
        out.stats.pruned += r.pruned;
        for (auto& [k, v] : r.counts) out.stats.status_counts[k] += v;
        all.insert(all.end(), r.converged.begin(), r.converged.end());
        out.failures.insert(out.failures.end(), r.failures.begin(), r.failures.end());
    }
    out.stats.converged_before_dedup = all.size();
    out.points = deduplicate(std::move(all), cfg.dedup_radius_mT);
    return out;
}

std::vector<TableRow> rank_and_tabulate(const std::vector<ZefozPoint>& points, std::size_t top_n,
                                        double report_cap_mT) {
    std::vector<TableRow> rows;
    for (std::size_t k = 0; k < points.size(); ++k) {
        const auto& p = points[k];
        if (!p.converged || p.B.norm() > report_cap_mT) continue;
        // B and -B are one physical point; keep the member with b >= 0.
        if (p.partner_neg >= 0 && p.B.z() < 0.0) continue;
        if (p.partner_neg >= 0 && p.B.z() == 0.0 && static_cast<std::size_t>(p.partner_neg) < k) continue;
        rows.push_back({p.i, p.j, p.t2, p.strength, p.frequency, signed_polar(p.B), k});
    }
    std::stable_sort(rows.begin(), rows.end(), [](const TableRow& a, const TableRow& b) { return a.t2 > b.t2; });
    if (rows.size() > top_n) rows.resize(top_n);
    return rows;
}

ReferenceOptimum reference_optimum(int site) {
    // (-370, 70, -495) is a domain exit; flipping the b sign lands on the b >= 0 representative.
    if (site == 2) return {2, 14, 15, Vec3(-370.0, 70.0, 495.0)};
    if (site == 1) return {1, 10, 11, Vec3(1400.0, -800.0, 1200.0)};
    throw InvalidParameter("site must be 1 or 2");
}

}  // namespace erzefoz
