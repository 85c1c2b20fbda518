#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    fs::path d = fs::temp_directory_path() / ("erzefoz_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

Run cli(const fs::path& dir, const std::string& args) {
    std::string cmd = std::string(ERZEFOZ_CLI) + " " + args + " > " + (dir / "stdout.txt").string() + " 2> " +
                      (dir / "stderr.txt").string();
    int raw = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(dir / "stdout.txt");
    r.err = slurp(dir / "stderr.txt");
    return r;
}

}  // namespace

TEST_CASE("unknown config keys are rejected with error JSON") {
    auto d = scratch("strict");
    std::ofstream(d / "bad.ini") << "[search]\nmax_iteration = 5\n";
    auto r = cli(d, "spectrum --config " + (d / "bad.ini").string() + " --out " + (d / "o").string());
    CHECK(r.code == 2);
    auto j = nlohmann::json::parse(r.err);
    CHECK(j["error"]["kind"] == "usage_error");
    CHECK(j["error"]["message"].get<std::string>().find("search.max_iteration") != std::string::npos);
    CHECK(cli(d, "spectrum --set search.bogus=1 --out " + (d / "o").string()).code == 2);
}

TEST_CASE("--B and --sph are mutually exclusive") {
    auto d = scratch("excl");
    auto r = cli(d, "spectrum --B 1,0,0 --sph 1,90,0 --out " + (d / "o").string());
    CHECK(r.code == 2);
    CHECK(nlohmann::json::parse(r.err)["error"]["kind"] == "usage_error");
}

TEST_CASE("outputs carry provenance metadata") {
    auto d = scratch("meta");
    auto r = cli(d, "spectrum --B 100,20,-30 --seed 7 --out " + (d / "o").string());
    REQUIRE(r.code == 0);
    std::string csv = slurp(d / "o" / "spectrum.csv");
    CHECK(csv.rfind("# config_hash=", 0) == 0);
    CHECK(csv.find("# seed=7\n") != std::string::npos);
    CHECK(csv.find("# dataset_version=") != std::string::npos);
    auto j = nlohmann::json::parse(slurp(d / "o" / "spectrum.json"));
    CHECK(j["meta"]["seed"] == 7);
    CHECK(j["meta"]["config_hash"].get<std::string>().size() == 16);
}

TEST_CASE("noise runs are byte-identical across reruns and worker counts") {
    auto d = scratch("det");
    const std::string base = "noise --kind Er --ppm 100 --seed 1 --samples 400 --out ";
    REQUIRE(cli(d, base + (d / "a").string() + " --workers 1").code == 0);
    REQUIRE(cli(d, base + (d / "b").string() + " --workers 2").code == 0);
    REQUIRE(cli(d, base + (d / "c").string() + " --workers 1").code == 0);
    auto strip = [](std::string s) {
        // worker count is part of the config hash, so compare the data rows only
        return s.substr(s.find("bin_center_uT"));
    };
    CHECK(slurp(d / "a" / "noise_Er.csv") == slurp(d / "c" / "noise_Er.csv"));
    CHECK(strip(slurp(d / "a" / "noise_Er.csv")) == strip(slurp(d / "b" / "noise_Er.csv")));
}

TEST_CASE("zero iterations leave nothing converged") {
    auto d = scratch("iter0");
    auto r = cli(d, "search --site 2 --transitions 14-15 --max-iter 0 --set noise.y_mode_uT=4.45 --out " +
                        (d / "o").string());
    REQUIRE(r.code == 0);
    auto j = nlohmann::json::parse(slurp(d / "o" / "zefoz_points.json"));
    CHECK(j["points"].empty());
    CHECK(r.out.find("0 converged") != std::string::npos);
}

TEST_CASE("unwritable output directory fails with exit 1") {
    auto d = scratch("io");
    std::ofstream(d / "file") << "x";
    auto r = cli(d, "spectrum --B 1,0,0 --out " + (d / "file" / "sub").string());
    CHECK(r.code == 1);
    CHECK(nlohmann::json::parse(r.err)["error"]["kind"] == "io_error");
}
