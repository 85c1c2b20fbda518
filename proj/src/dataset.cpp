#include "erzefoz/dataset.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "erzefoz/constants.hpp"

namespace erzefoz {

namespace pt = boost::property_tree;

std::string format_vec(const Vec3& v) {
    std::ostringstream os;
    os << "(" << v.x() << ", " << v.y() << ", " << v.z() << ")";
    return os.str();
}

double LatticeSpec::volume() const {
    return a * b * c * std::sin(beta_deg * constants::kPi / 180.0);
}

double LatticeSpec::y_density() const { return n_Y_per_cell / volume(); }

SiteTensors c2_partner(const SiteTensors& site) {
    Mat3 R = Vec3(-1.0, -1.0, 1.0).asDiagonal();
    SiteTensors out = site;
    out.A = R * site.A * R.transpose();
    out.Q = R * site.Q * R.transpose();
    out.g_e = R * site.g_e * R.transpose();
    out.orientation = site.orientation == 1 ? 2 : 1;
    return out;
}

const SiteTensors& Dataset::site(int id) const {
    if (id == 1) return site1;
    if (id == 2) return site2;
    throw InvalidParameter("site must be 1 or 2, got " + std::to_string(id));
}

const IsotopeData& Dataset::isotope(const std::string& n) const {
    for (const auto& iso : isotopes)
        if (iso.name == n) return iso;
    throw InvalidParameter("unknown isotope " + n);
}

void validate_site(const SiteTensors& site, double rel_tol) {
    auto check = [&](const Mat3& m, const char* name) {
        if (!m.allFinite()) throw InvalidParameter(std::string(name) + " has non-finite entries");
        double scale = std::max(m.cwiseAbs().maxCoeff(), 1e-300);
        if ((m - m.transpose()).cwiseAbs().maxCoeff() > rel_tol * scale)
            throw InvalidParameter(std::string(name) + " tensor is not symmetric");
    };
    check(site.A, "A");
    check(site.Q, "Q");
    check(site.g_e, "g_e");
    if (!std::isfinite(site.g_n)) throw InvalidParameter("g_n is not finite");
}

namespace {

std::vector<double> numbers(const std::string& s, const std::string& key, std::size_t expect) {
    std::istringstream is(s);
    std::vector<double> out;
    std::string tok;
    while (is >> tok) {
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(tok, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != tok.size()) throw InvalidParameter("bad number '" + tok + "' in " + key);
        out.push_back(v);
    }
    if (expect && out.size() != expect)
        throw InvalidParameter(key + ": expected " + std::to_string(expect) + " values, got " +
                               std::to_string(out.size()));
    return out;
}

double number(const pt::ptree& sec, const std::string& section, const std::string& key) {
    auto v = sec.get_optional<std::string>(key);
    if (!v) throw InvalidParameter("missing key " + section + "." + key);
    return numbers(*v, section + "." + key, 1)[0];
}

Mat3 matrix(const pt::ptree& sec, const std::string& section, const std::string& key) {
    auto v = sec.get_optional<std::string>(key);
    if (!v) throw InvalidParameter("missing key " + section + "." + key);
    auto n = numbers(*v, section + "." + key, 9);
    Mat3 m;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m(r, c) = n[3 * r + c];
    return m;
}

void only_keys(const pt::ptree& sec, const std::string& section, const std::set<std::string>& allowed) {
    for (const auto& kv : sec)
        if (!allowed.count(kv.first))
            throw InvalidParameter("unknown key " + section + "." + kv.first);
}

SiteTensors read_site(const pt::ptree& sec, const std::string& section, int id) {
    only_keys(sec, section, {"A_MHz", "Q_MHz", "g_e", "g_n"});
    SiteTensors s;
    s.site_id = id;
    s.A = matrix(sec, section, "A_MHz");
    s.Q = matrix(sec, section, "Q_MHz");
    s.g_e = matrix(sec, section, "g_e");
    s.g_n = number(sec, section, "g_n");
    validate_site(s);
    return s;
}

}  // namespace

Dataset parse_dataset(const std::string& text) {
    pt::ptree tree;
    std::istringstream is(text);
    try {
        pt::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw InvalidParameter(std::string("dataset parse error: ") + e.what());
    }
    only_keys(tree, "dataset", {"dataset", "site1", "site2", "lattice", "isotopes", "elements", "noise"});
    auto section = [&](const std::string& n) -> const pt::ptree& {
        auto c = tree.get_child_optional(n);
        if (!c) throw InvalidParameter("missing section [" + n + "]");
        return *c;
    };

    Dataset d;
    const auto& meta = section("dataset");
    only_keys(meta, "dataset", {"version", "name"});
    d.version = meta.get<std::string>("version", "");
    d.name = meta.get<std::string>("name", "");
    if (d.version.empty()) throw InvalidParameter("dataset.version is required");

    d.site1 = read_site(section("site1"), "site1", 1);
    d.site2 = read_site(section("site2"), "site2", 2);

    const auto& lat = section("lattice");
    only_keys(lat, "lattice", {"a_A", "b_A", "c_A", "beta_deg", "n_Y_per_cell", "n_Si_per_cell", "n_O_per_cell"});
    d.lattice.a = number(lat, "lattice", "a_A");
    d.lattice.b = number(lat, "lattice", "b_A");
    d.lattice.c = number(lat, "lattice", "c_A");
    d.lattice.beta_deg = number(lat, "lattice", "beta_deg");
    d.lattice.n_Y_per_cell = static_cast<int>(number(lat, "lattice", "n_Y_per_cell"));
    d.lattice.n_Si_per_cell = static_cast<int>(number(lat, "lattice", "n_Si_per_cell"));
    d.lattice.n_O_per_cell = static_cast<int>(number(lat, "lattice", "n_O_per_cell"));

    for (const auto& kv : section("isotopes")) {
        auto n = numbers(kv.second.data(), "isotopes." + kv.first, 5);
        IsotopeData iso{kv.first, n[0] / 100.0, n[1], n[2], n[3], n[4]};
        if (iso.abundance < 0.0 || iso.abundance > 1.0)
            throw InvalidParameter("isotope abundance out of range: " + kv.first);
        if (iso.mass <= 0.0) throw InvalidParameter("isotope mass must be positive: " + kv.first);
        d.isotopes.push_back(iso);
    }
    for (const auto& kv : section("elements")) {
        double m = numbers(kv.second.data(), "elements." + kv.first, 1)[0];
        if (m <= 0.0) throw InvalidParameter("element mass must be positive: " + kv.first);
        d.element_mass[kv.first] = m;
    }

    const auto& nz = section("noise");
    only_keys(nz, "noise", {"y_exclusion_A", "er_exclusion_A", "er_resonant_fraction", "g_eff", "er_analytic_scale"});
    d.noise.y_exclusion_A = number(nz, "noise", "y_exclusion_A");
    d.noise.er_exclusion_A = number(nz, "noise", "er_exclusion_A");
    d.noise.er_resonant_fraction = number(nz, "noise", "er_resonant_fraction");
    d.noise.g_eff = number(nz, "noise", "g_eff");
    d.noise.er_analytic_scale = number(nz, "noise", "er_analytic_scale");
    if (d.noise.er_resonant_fraction <= 0.0 || d.noise.er_resonant_fraction > 1.0)
        throw InvalidParameter("noise.er_resonant_fraction must lie in (0, 1]");
    return d;
}

Dataset load_dataset_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidParameter("cannot open dataset file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_dataset(ss.str());
}

Dataset builtin_dataset() { return parse_dataset(builtin_dataset_text()); }

}  // namespace erzefoz
