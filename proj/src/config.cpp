#include "erzefoz/config.hpp"

#include <algorithm>
#include <cmath>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace erzefoz {

namespace {

bool parse_bool(const std::string& v, bool& out) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return out = true, true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return out = false, true;
    return false;
}

std::string trim(const std::string& s) {
    auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::vector<double> parse_list(const std::string& s, std::size_t expect) {
    std::vector<double> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, ',')) {
        item = trim(item);
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (item.empty() || pos != item.size()) throw UsageError("bad number '" + item + "' in list '" + s + "'");
        out.push_back(v);
    }
    if (expect && out.size() != expect)
        throw UsageError("expected " + std::to_string(expect) + " comma-separated values, got '" + s + "'");
    return out;
}

std::pair<int, int> parse_transition(const std::string& s) {
    auto dash = s.find_first_of("-,:");
    if (dash == std::string::npos) throw UsageError("transition must look like i-j, got '" + s + "'");
    try {
        std::size_t p1 = 0, p2 = 0;
        std::string a = trim(s.substr(0, dash)), b = trim(s.substr(dash + 1));
        int i = std::stoi(a, &p1), j = std::stoi(b, &p2);
        if (p1 != a.size() || p2 != b.size()) throw std::invalid_argument(s);
        check_levels(i, j);
        return {std::min(i, j), std::max(i, j)};
    } catch (const InvalidParameter& e) {
        throw UsageError(e.what());
    } catch (const std::exception&) {
        throw UsageError("transition must look like i-j, got '" + s + "'");
    }
}

std::vector<std::pair<int, int>> parse_transitions(const std::string& s) {
    std::vector<std::pair<int, int>> out;
    std::string item, text = s;
    std::replace(text.begin(), text.end(), ';', ' ');
    std::istringstream is(text);
    while (is >> item) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse_transition(item));
    }
    return out;
}

RunConfig::RunConfig() {
    using T = Type;
    define("run.site", T::String, "1");
    define("run.seed", T::UInt, "1");
    define("run.workers", T::Int, "0");
    define("run.output_dir", T::String, "erzefoz_out");
    define("run.formats", T::String, "csv,json");
    define("run.dataset", T::String, "builtin");

    define("noise.kind", T::String, "Y");
    define("noise.n_er_ppm", T::Double, "10");
    define("noise.samples", T::Int, "6000");
    define("noise.y_mode_uT", T::Double, "0");
    define("noise.scalarization", T::String, "worst_case_eig");
    define("noise.er_resonant_only", T::Bool, "true");
    define("noise.histogram_bins", T::Int, "60");

    define("model.strength_axis", T::String, "b");
    define("model.gap_threshold_MHz", T::Double, "0.001");
    define("model.fd_step_mT", T::Double, "0.01");
    define("model.coupling_check", T::Bool, "true");

    define("search.max_iterations", T::Int, "230");
    define("search.s1_tolerance", T::Double, "1e-12");
    define("search.field_cap_search_mT", T::Double, "10000");
    define("search.field_cap_report_mT", T::Double, "3000");
    define("search.domain_limit_mT", T::Double, "20000");
    define("search.dedup_radius_mT", T::Double, "0.5");
    define("search.regularization", T::Double, "1e-12");
    define("search.condition_limit", T::Double, "1e12");
    define("search.direction_set", T::Int, "26");
    define("search.track_levels", T::Bool, "true");
    define("search.overlap_min", T::Double, "0.5");
    define("search.prune_after", T::Int, "3");
    define("search.transitions", T::String, "");
    define("search.orientations", T::String, "1");
    define("search.top_n", T::Int, "10");
    define("search.keep_failures", T::Bool, "false");
    define("search.cartesian_axis_mT", T::String, "-25,-15,-5,5,15,25");
    define("search.radial_fine_mT", T::String, "0,200,8.6956");
    define("search.radial_coarse_mT", T::String, "200,20000,1000");

    define("spectrum.B", T::String, "");
    define("spectrum.sph", T::String, "");
    define("spectrum.transitions", T::Bool, "false");
    define("spectrum.orientations", T::String, "1,2");

    define("scan.plane", T::String, "theta,phi");
    define("scan.center", T::String, "site2-opt");
    define("scan.transition", T::String, "");
    define("scan.span1", T::Double, "0");
    define("scan.span2", T::Double, "0");
    define("scan.steps1", T::Int, "201");
    define("scan.steps2", T::Int, "201");

    define("map.kind", T::String, "zero-field");
    define("map.tensor", T::String, "g_e");
    define("map.n_theta", T::Int, "181");
    define("map.n_phi", T::Int, "361");

    define("sweep.mode", T::String, "field");
    define("sweep.transition", T::String, "");
    define("sweep.direction", T::String, "opt");
    define("sweep.field", T::String, "zero");
    define("sweep.B_min_mT", T::Double, "0");
    define("sweep.B_max_mT", T::Double, "0");
    define("sweep.steps", T::Int, "2001");
    define("sweep.ppm_min", T::Double, "0.01");
    define("sweep.ppm_max", T::Double, "10000");
    define("sweep.points", T::Int, "121");

    define("appendix_e.n_er_ppm", T::Double, "50");
    define("appendix_e.B_max_mT", T::Double, "1");
    define("appendix_e.dense_steps", T::Int, "201");

    define("frozen_core.dB_y_uT", T::Double, "0");

    define("table.input", T::String, "");
    define("table.fit", T::String, "");
}

void RunConfig::define(const std::string& key, Type type, const std::string& def) { entries_[key] = {type, def}; }

void RunConfig::set(const std::string& key, const std::string& raw) {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw UsageError("unknown configuration key '" + key + "'");
    const std::string v = trim(raw);
    auto bad = [&](const char* what) {
        return UsageError("configuration key '" + key + "' expects " + what + ", got '" + v + "'");
    };
    try {
        std::size_t pos = 0;
        switch (it->second.type) {
            case Type::Int: {
                long long x = std::stoll(v, &pos);
                (void)x;
                if (pos != v.size()) throw bad("an integer");
                break;
            }
            case Type::UInt: {
                if (!v.empty() && v[0] == '-') throw bad("a non-negative integer");
                unsigned long long x = std::stoull(v, &pos);
                (void)x;
                if (pos != v.size()) throw bad("a non-negative integer");
                break;
            }
            case Type::Double: {
                double x = std::stod(v, &pos);
                if (pos != v.size() || !std::isfinite(x)) throw bad("a number");
                break;
            }
            case Type::Bool: {
                bool b;
                if (!parse_bool(v, b)) throw bad("true or false");
                break;
            }
            case Type::String: break;
        }
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception&) {
        throw UsageError("configuration key '" + key + "' has an invalid value '" + v + "'");
    }
    it->second.value = v;
}

void RunConfig::load_text(const std::string& text) {
    boost::property_tree::ptree tree;
    std::istringstream is(text);
    try {
        boost::property_tree::read_ini(is, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw UsageError(std::string("config parse error: ") + e.what());
    }
    for (const auto& sec : tree) {
        if (sec.second.empty()) throw UsageError("key '" + sec.first + "' must appear inside a [section]");
        for (const auto& kv : sec.second) set(sec.first + "." + kv.first, kv.second.data());
    }
}

void RunConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    load_text(ss.str());
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw UsageError("unknown configuration key '" + key + "'");
    return it->second.value;
}

double RunConfig::get_double(const std::string& key) const { return std::stod(get(key)); }
long long RunConfig::get_int(const std::string& key) const { return std::stoll(get(key)); }
std::uint64_t RunConfig::get_uint(const std::string& key) const { return std::stoull(get(key)); }
bool RunConfig::get_bool(const std::string& key) const {
    bool b = false;
    parse_bool(get(key), b);
    return b;
}

std::vector<std::string> RunConfig::keys() const {
    std::vector<std::string> k;
    for (const auto& e : entries_) k.push_back(e.first);
    return k;
}

std::string RunConfig::canonical() const {
    std::string s;
    for (const auto& [k, e] : entries_) {
        if (k == "run.output_dir" || k == "run.workers") continue;   // do not affect results
        s += k + "=" + e.value + "\n";
    }
    return s;
}

std::uint64_t RunConfig::hash() const { return fnv1a64(canonical()); }

std::string RunConfig::hash_hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
    return buf;
}

Dataset RunConfig::dataset() const {
    const auto& src = get("run.dataset");
    if (src.empty() || src == "builtin") return builtin_dataset();
    try {
        return load_dataset_file(src);
    } catch (const InvalidParameter& e) {
        throw UsageError(e.what());
    }
}

std::vector<int> RunConfig::sites() const {
    const auto& s = get("run.site");
    if (s == "1") return {1};
    if (s == "2") return {2};
    if (s == "both" || s == "1,2") return {1, 2};
    throw UsageError("run.site must be 1, 2 or both");
}

SensitivityOptions RunConfig::sensitivity_options() const {
    SensitivityOptions o;
    o.gap_threshold_MHz = get_double("model.gap_threshold_MHz");
    o.fd_step_mT = get_double("model.fd_step_mT");
    o.coupling_check = get_bool("model.coupling_check");
    if (!(o.gap_threshold_MHz >= 0.0) || !(o.fd_step_mT > 0.0))
        throw UsageError("model.gap_threshold_MHz must be >= 0 and model.fd_step_mT > 0");
    return o;
}

Scalarization RunConfig::scalarization() const {
    try {
        return parse_scalarization(get("noise.scalarization"));
    } catch (const InvalidParameter& e) {
        throw UsageError(e.what());
    }
}

SearchConfig RunConfig::search_config() const {
    SearchConfig c;
    c.max_iterations = static_cast<int>(get_int("search.max_iterations"));
    c.s1_tolerance = get_double("search.s1_tolerance");
    c.field_cap_search_mT = get_double("search.field_cap_search_mT");
    c.field_cap_report_mT = get_double("search.field_cap_report_mT");
    c.domain_limit_mT = get_double("search.domain_limit_mT");
    c.dedup_radius_mT = get_double("search.dedup_radius_mT");
    c.regularization = get_double("search.regularization");
    c.condition_limit = get_double("search.condition_limit");
    c.direction_set = static_cast<int>(get_int("search.direction_set"));
    c.track_levels = get_bool("search.track_levels");
    c.overlap_min = get_double("search.overlap_min");
    c.prune_after = static_cast<int>(get_int("search.prune_after"));
    c.transitions = parse_transitions(get("search.transitions"));
    c.orientations.clear();
    for (double o : parse_list(get("search.orientations"))) c.orientations.push_back(static_cast<int>(o));
    c.keep_failures = get_bool("search.keep_failures");
    c.cartesian_axis_mT.clear();
    if (!get("search.cartesian_axis_mT").empty()) c.cartesian_axis_mT = parse_list(get("search.cartesian_axis_mT"));
    c.radial.clear();
    for (const char* key : {"search.radial_fine_mT", "search.radial_coarse_mT"}) {
        if (get(key).empty()) continue;
        auto v = parse_list(get(key), 3);
        c.radial.push_back({v[0], v[1], v[2], v[0] > 0.0});
    }
    try {
        c.strength_axis = parse_strength_axis(get("model.strength_axis"));
    } catch (const InvalidParameter& e) {
        throw UsageError(e.what());
    }
    c.sensitivity = sensitivity_options();
    c.workers = static_cast<int>(get_int("run.workers"));
    try {
        c.validate();
    } catch (const InvalidParameter& e) {
        throw UsageError(e.what());
    }
    return c;
}

}  // namespace erzefoz
