#include "erzefoz/noise_model.hpp"

#include <algorithm>
#include <boost/math/special_functions/lambert_w.hpp>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <numeric>

#include "erzefoz/constants.hpp"
#include "erzefoz/parallel.hpp"

namespace erzefoz {

using constants::kPi;

BathKind parse_bath_kind(const std::string& s) {
    if (s == "Y" || s == "host_Y" || s == "y") return BathKind::host_Y;
    if (s == "Er" || s == "dopant_Er" || s == "er") return BathKind::dopant_Er;
    throw InvalidParameter("bath kind must be Y or Er, got '" + s + "'");
}

std::string to_string(BathKind k) { return k == BathKind::host_Y ? "host_Y" : "dopant_Er"; }

NoiseSettings noise_settings(const Dataset& d, int site_id) {
    NoiseSettings s;
    s.lattice = d.lattice;
    s.yttrium = d.isotope("Y89");
    s.calibration = d.noise;
    s.probe = d.site(site_id);
    s.other_site = d.site(site_id == 1 ? 2 : 1);
    return s;
}

namespace {

Vec3 random_unit(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double z = 2.0 * u(rng) - 1.0;
    double p = 2.0 * kPi * u(rng);
    double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {s * std::cos(p), s * std::sin(p), z};
}

Vec3 random_in_shell(std::mt19937_64& rng, double r_in, double r_out) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double a = r_in * r_in * r_in, b = r_out * r_out * r_out;
    double r = std::cbrt(a + u(rng) * (b - a));
    return r * random_unit(rng);
}

double shell_volume(double r_in, double r_out) {
    return 4.0 / 3.0 * kPi * (r_out * r_out * r_out - r_in * r_in * r_in);
}

// Field of one moment at the origin, uT.
Vec3 dipole_at_origin(const Vec3& pos_A, const Vec3& mu) {
    Vec3 r = -pos_A * constants::kAngstrom;   // origin relative to the spin
    double d = r.norm();
    Vec3 n = r / d;
    return constants::kMu0Over4Pi * (3.0 * n * n.dot(mu) - mu) / (d * d * d) * 1e6;
}

std::array<Mat3, 4> subsite_tensors(const NoiseSettings& s) {
    return {s.probe.g_e, c2_partner(s.probe).g_e, s.other_site.g_e, c2_partner(s.other_site).g_e};
}

double y_moment(const IsotopeData& y) { return std::abs(y.g_n) * constants::kMuN * y.I; }

template <class Sink>
void stream_y(std::mt19937_64& rng, const LatticeSpec& lat, double r_in, double r_out, double mu, Sink&& sink) {
    auto count = static_cast<std::size_t>(std::llround(lat.y_density() * shell_volume(r_in, r_out)));
    for (std::size_t k = 0; k < count; ++k) {
        Vec3 pos = random_in_shell(rng, r_in, r_out);
        sink(BathSpin{pos, mu * random_unit(rng), 0});
    }
}

template <class Sink>
void stream_er(std::mt19937_64& rng, const LatticeSpec& lat, double ppm, double r_in, double r_out,
               const std::array<Mat3, 4>& g, const NoiseSettings& s, Sink&& sink) {
    double sites = lat.y_density() * shell_volume(r_in, r_out);
    double p = ppm * 1e-6;
    double f = s.calibration.er_resonant_fraction;
    if (s.er_resonant_only) p *= f;
    if (p <= 0.0 || sites < 1.0) return;
    std::binomial_distribution<long long> occ(static_cast<long long>(std::llround(sites)), std::min(p, 1.0));
    long long count = occ(rng);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> other(1, 3);
    for (long long k = 0; k < count; ++k) {
        Vec3 pos = random_in_shell(rng, r_in, r_out);
        int cls = 0;
        if (!s.er_resonant_only && u(rng) >= f) cls = other(rng);
        Vec3 spin = 0.5 * random_unit(rng);
        sink(BathSpin{pos, constants::kMuB * (g[cls] * spin), cls});
    }
}

void check_ppm(double ppm) {
    if (!(ppm >= 0.0 && ppm <= 1e6)) throw InvalidParameter("n_er_ppm must lie in [0, 1e6]");
}

}  // namespace

Bath generate_y_bath(const LatticeSpec& lattice, double radius_A, std::uint64_t seed, const IsotopeData& y,
                     double exclusion_A) {
    double min_radius = std::max({lattice.a, lattice.b, lattice.c});
    if (!(radius_A >= min_radius))
        throw InvalidParameter("Y bath radius must be at least one lattice constant (" + std::to_string(min_radius) +
                               " A)");
    auto rng = substream(seed, 0, 1);
    Bath bath;
    stream_y(rng, lattice, exclusion_A, radius_A, y_moment(y), [&](const BathSpin& b) { bath.push_back(b); });
    return bath;
}

Bath generate_er_bath(const LatticeSpec& lattice, double n_er_ppm, double radius_A, const SiteTensors& site,
                      std::uint64_t seed, const NoiseSettings& settings) {
    check_ppm(n_er_ppm);
    if (!(radius_A > 0.0)) throw InvalidParameter("Er bath radius must be positive");
    NoiseSettings s = settings;
    s.probe = site;
    auto g = subsite_tensors(s);
    auto rng = substream(seed, 0, 2);
    Bath bath;
    stream_er(rng, lattice, n_er_ppm, s.calibration.er_exclusion_A, radius_A, g, s,
              [&](const BathSpin& b) { bath.push_back(b); });
    return bath;
}

FluctuationSample dipole_field_sum(const Bath& bath, double exclusion_A) {
    FluctuationSample out;
    for (const auto& b : bath) {
        double r = b.position.norm();
        if (r <= exclusion_A || r == 0.0)
            throw InvalidParameter("bath spin at " + std::to_string(r) + " A lies inside the exclusion radius");
        out.dB += dipole_at_origin(b.position, b.moment);
    }
    out.magnitude = out.dB.norm();
    return out;
}

double maxwell_boltzmann_fwhm(double sigma) {
    const double z = -0.5 * std::exp(-1.0);
    double u1 = -boost::math::lambert_w0(z);
    double u2 = -boost::math::lambert_wm1(z);
    return sigma * std::sqrt(2.0) * (std::sqrt(u2) - std::sqrt(u1));
}

namespace {

Histogram make_histogram(const std::vector<double>& x, double hi, int bins) {
    Histogram h;
    h.edges.resize(bins + 1);
    for (int k = 0; k <= bins; ++k) h.edges[k] = hi * k / bins;
    h.counts.assign(bins, 0.0);
    for (double v : x) {
        if (v < 0.0 || v >= hi) continue;
        int k = std::min(bins - 1, static_cast<int>(v / hi * bins));
        h.counts[k] += 1.0;
    }
    return h;
}

std::size_t smoothed_argmax(const Histogram& h) {
    std::size_t best = 0;
    double bv = -1.0;
    for (std::size_t k = 0; k < h.counts.size(); ++k) {
        double s = h.counts[k];
        if (k > 0) s += h.counts[k - 1];
        if (k + 1 < h.counts.size()) s += h.counts[k + 1];
        if (s > bv) {
            bv = s;
            best = k;
        }
    }
    return best;
}

}  // namespace

MaxwellBoltzmannFit fit_maxwell_boltzmann(const std::vector<double>& magnitudes, int bins) {
    MaxwellBoltzmannFit fit;
    if (bins < 8) throw InvalidParameter("histogram needs at least 8 bins");
    double vmax = magnitudes.empty() ? 0.0 : *std::max_element(magnitudes.begin(), magnitudes.end());
    if (vmax <= 0.0) {
        fit.histogram.edges = {0.0, 1.0};
        fit.histogram.counts = {static_cast<double>(magnitudes.size())};
        return fit;
    }
    std::vector<double> sorted = magnitudes;
    std::sort(sorted.begin(), sorted.end());
    double q95 = sorted[static_cast<std::size_t>(0.95 * (sorted.size() - 1))];
    if (q95 <= 0.0) q95 = vmax;

    Histogram coarse = make_histogram(sorted, q95, bins);
    double m0 = coarse.center(smoothed_argmax(coarse));
    Histogram h = make_histogram(sorted, 3.0 * m0, bins);
    fit.histogram = h;
    std::size_t raw = std::distance(h.counts.begin(), std::max_element(h.counts.begin(), h.counts.end()));
    fit.argmax = h.center(raw);

    const std::size_t n = h.counts.size();
    auto shape = [&](double sigma, std::size_t k) {
        double x = h.center(k);
        return x * x * std::exp(-x * x / (2 * sigma * sigma));
    };
    auto residual = [&](double sigma) {
        double cf = 0, ff = 0, cc = 0;
        for (std::size_t k = 0; k < n; ++k) {
            double f = shape(sigma, k);
            cf += h.counts[k] * f;
            ff += f * f;
            cc += h.counts[k] * h.counts[k];
        }
        return ff > 0 ? cc - cf * cf / ff : cc;
    };
    const double lo = 0.05 * m0, hi = 3.0 * m0;
    auto best = boost::math::tools::brent_find_minima(residual, lo, hi, 40);
    fit.sigma = best.first;
    double cf = 0, ff = 0;
    for (std::size_t k = 0; k < n; ++k) {
        double f = shape(fit.sigma, k);
        cf += h.counts[k] * f;
        ff += f * f;
    }
    fit.amplitude = cf / ff;
    double mean = std::accumulate(h.counts.begin(), h.counts.end(), 0.0) / n;
    double tot = 0;
    for (double c : h.counts) tot += (c - mean) * (c - mean);
    fit.r_squared = tot > 0 ? 1.0 - best.second / tot : 0.0;
    fit.mode = fit.sigma * std::sqrt(2.0);
    fit.fwhm = maxwell_boltzmann_fwhm(fit.sigma);
    bool at_bound = fit.sigma < lo * 1.001 || fit.sigma > hi * 0.999;
    // Er histograms are heavy tailed and fit with R^2 near 0.5, so the cut sits lower.
    fit.failed = at_bound || fit.r_squared < 0.3;
    return fit;
}

FluctuationDistribution run_fluctuation_mc(BathKind kind, double n_er_ppm, std::size_t n_samples,
                                           std::uint64_t seed, const NoiseSettings& s) {
    if (n_samples < 100) throw InvalidParameter("n_samples must be at least 100");
    FluctuationDistribution out;
    out.kind = kind;
    out.n_er_ppm = kind == BathKind::dopant_Er ? n_er_ppm : 0.0;
    out.seed = seed;
    out.n_samples = n_samples;

    double exclusion = 0.0, spacing = 0.0;
    if (kind == BathKind::host_Y) {
        exclusion = s.calibration.y_exclusion_A;
        spacing = std::cbrt(1.0 / s.lattice.y_density());
    } else {
        check_ppm(n_er_ppm);
        exclusion = s.calibration.er_exclusion_A;
        if (n_er_ppm == 0.0) {
            out.samples.assign(n_samples, 0.0);
            auto fit = fit_maxwell_boltzmann(out.samples, s.histogram_bins);
            out.histogram = fit.histogram;
            return out;
        }
        double eff = s.er_resonant_only ? n_er_ppm * s.calibration.er_resonant_fraction : n_er_ppm;
        spacing = er_spacing(eff, s.lattice);
    }
    const auto g = subsite_tensors(s);
    const double mu_y = y_moment(s.yttrium);

    double radius = s.radius_factor * spacing;
    std::vector<double> inner(n_samples), full(n_samples);
    for (int attempt = 0; attempt <= s.max_doublings; ++attempt) {
        const double half = 0.5 * radius;
        parallel_for(n_samples, s.workers, [&](std::size_t idx) {
            auto rng = substream(seed, idx, 100 + attempt);
            Vec3 bin = Vec3::Zero(), bout = Vec3::Zero();
            auto sink = [&](const BathSpin& b) {
                Vec3 f = dipole_at_origin(b.position, b.moment);
                if (b.position.squaredNorm() < half * half)
                    bin += f;
                else
                    bout += f;
            };
            if (kind == BathKind::host_Y)
                stream_y(rng, s.lattice, exclusion, radius, mu_y, sink);
            else
                stream_er(rng, s.lattice, n_er_ppm, exclusion, radius, g, s, sink);
            inner[idx] = bin.norm();
            full[idx] = (bin + bout).norm();
        });
        auto fi = fit_maxwell_boltzmann(inner, s.histogram_bins);
        auto ff = fit_maxwell_boltzmann(full, s.histogram_bins);
        out.bath_radius_A = radius;
        out.samples = full;
        out.histogram = ff.histogram;
        out.mb_sigma = ff.sigma;
        out.mode = ff.mode;
        out.fwhm = ff.fwhm;
        out.argmax_mode = ff.argmax;
        out.fit_r_squared = ff.r_squared;
        out.fit_failed = ff.failed;
        out.radius_converged = std::abs(ff.mode - fi.mode) <= s.radius_tolerance * std::abs(ff.mode);
        if (out.radius_converged) break;
        radius *= 2.0;
    }
    return out;
}

double er_spacing(double n_er_ppm, const LatticeSpec& lattice) {
    if (!(n_er_ppm > 0.0)) throw InvalidParameter("n_er_ppm must be positive");
    return std::cbrt(lattice.volume() / (lattice.n_Y_per_cell * n_er_ppm * 1e-6));
}

double weight_to_number_factor(const Dataset& d) {
    auto m = [&](const char* e) {
        auto it = d.element_mass.find(e);
        if (it == d.element_mass.end()) throw InvalidParameter(std::string("missing element mass ") + e);
        return it->second;
    };
    return (2 * m("Y") + m("Si") + 5 * m("O")) / m("Er");
}

double weight_to_number_ppm(double weight_ppm, const Dataset& d) { return weight_ppm * weight_to_number_factor(d); }

double literal_er_fluctuation(double n_er_ppm, const LatticeSpec& lattice, double g_eff) {
    double r = er_spacing(n_er_ppm, lattice) * constants::kAngstrom;
    return 2.0 * constants::kMu0Over4Pi * constants::kMuB * g_eff / (r * r * r) * 1e6;
}

double analytic_er_fluctuation(double n_er_ppm, const LatticeSpec& lattice, const NoiseCalibration& cal) {
    return cal.er_analytic_scale * literal_er_fluctuation(n_er_ppm, lattice, cal.g_eff);
}

FrozenCore frozen_core(double dB_y_mode, const LatticeSpec& lattice, const NoiseCalibration& cal) {
    if (!(dB_y_mode > 0.0)) throw InvalidParameter("frozen core needs a positive Y fluctuation");
    FrozenCore fc;
    fc.n_ppm = dB_y_mode / analytic_er_fluctuation(1.0, lattice, cal);
    fc.radius_A = er_spacing(fc.n_ppm, lattice);
    fc.y_count = 4.0 / 3.0 * kPi * std::pow(fc.radius_A, 3) * lattice.y_density();
    return fc;
}

NoiseSummary combine_noise(double y_mode, double er_mode) {
    NoiseSummary n;
    n.y_mode = y_mode;
    n.er_mode = er_mode;
    n.total_mode = std::hypot(y_mode, er_mode);
    n.sigma = n.total_mode / std::sqrt(2.0);
    return n;
}

}  // namespace erzefoz
