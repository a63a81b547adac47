#include <catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

// runs the CLI with stdout captured; stderr goes to err_file when given
Result kantran(const std::string& args, const std::string& err_file = "") {
    std::string cmd = std::string(KANTRAN_CLI_PATH) + " " + args;
    cmd += err_file.empty() ? " 2>/dev/null" : " 2>" + err_file;
    Result r;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p);
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch() {
    const fs::path d = fs::temp_directory_path() / "kantran_cli_test";
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("validate prints the report") {
    const auto r = kantran("validate --system kan-diffeo");
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["k1"] == true);
    CHECK(j["k2"] == true);
    CHECK(j["k3"] == true);
    CHECK(j["derivative_range"][0] == 0.96875);
    CHECK(j["derivative_range"][1] == 1.03125);
    CHECK(j["fixed_points"].size() == 2);
    CHECK(j["p_kind"] == "NS");
}

TEST_CASE("independence") {
    CHECK(kantran("independence --r 31/32 --s 33/32").out == "independent\n");
    CHECK(kantran("independence --r 4/9 --s 2/3").out == "dependent 2 1\n");
    CHECK(kantran("independence --r 31/x --s 2").code == 2);
}

TEST_CASE("certify, verify and determinism") {
    const auto d = scratch();
    {
        std::ofstream cfg(d / "boxes.cfg");
        cfg << "[U]\nx1 = 0.3\nx2 = 0.6\nside_s = 0.1\nt_lo = 0.3\nt_hi = 0.4\n"
               "[V]\nx1 = 0.7\nx2 = 0.2\nside_s = 0.1\nt_lo = 0.6\nt_hi = 0.7\n";
    }
    const std::string base = "certify --system kan-diffeo --config " + (d / "boxes.cfg").string();
    REQUIRE(kantran(base + " --out " + (d / "cert.json").string()).code == 0);
    REQUIRE(kantran(base + " --workers 2 --out " + (d / "cert2.json").string()).code == 0);
    const std::string text = slurp(d / "cert.json");
    CHECK(text == slurp(d / "cert2.json"));

    const auto j = nlohmann::json::parse(text);
    std::vector<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
    CHECK(keys == std::vector<std::string>{"U", "V", "diagnostics", "image_residual", "k0s", "kn", "l0u", "ln", "m",
                                           "system", "witness"});
    std::vector<std::string> dkeys;
    for (auto it = j["diagnostics"].begin(); it != j["diagnostics"].end(); ++it) dkeys.push_back(it.key());
    CHECK(dkeys == std::vector<std::string>{"D1", "D2", "Q", "R1", "R2", "dominance_n", "gamma", "lambda", "rho"});
    CHECK(j["m"] == j["k0s"].get<int>() + j["kn"].get<int>() + j["ln"].get<int>() + j["l0u"].get<int>());
    CHECK(j["image_residual"] == 0.0);
    CHECK(j["witness"].size() == 3);

    const auto v = kantran("search --verify " + (d / "cert.json").string());
    REQUIRE(v.code == 0);
    CHECK(nlohmann::json::parse(v.out)["verified"] == true);

    // a tampered witness no longer verifies
    auto bad = j;
    bad["m"] = j["m"].get<int>() + 1;
    bad["kn"] = j["kn"].get<int>() + 1;
    std::ofstream(d / "bad.json") << bad.dump();
    CHECK(kantran("search --verify " + (d / "bad.json").string()).code == 1);
}

TEST_CASE("seeded boxes are reproducible") {
    const auto a = kantran("search --seed 3 --m-max 2000");
    const auto b = kantran("search --seed 3 --m-max 2000 --workers 3");
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
    CHECK(nlohmann::json::parse(a.out)["seed"] == 3);
}

TEST_CASE("pairs CSV") {
    const auto r = kantran("pairs --alpha 31/32 --beta 32/33 --eta 1 --eps 1e-3 --count 3");
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind("k,l,residual,eta_star\n1,1,", 0) == 0);
    CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 4);
}

TEST_CASE("basins PGM") {
    const auto d = scratch();
    REQUIRE(kantran("basins --system kan-endo --width 8 --height 4 --n 100 --seed 5 --out " + (d / "b.pgm").string() +
                    " --csv " + (d / "b.csv").string())
                .code == 0);
    const std::string pgm = slurp(d / "b.pgm");
    CHECK(pgm.rfind("P5\n# seed 5\n8 4\n255\n", 0) == 0);
    CHECK(pgm.size() == std::string("P5\n# seed 5\n8 4\n255\n").size() + 32);
    CHECK(slurp(d / "b.csv").rfind("x1,x2_or_t,label,avg_t\n", 0) == 0);
}

TEST_CASE("exit codes") {
    const auto d = scratch();
    CHECK(kantran("frobnicate").code == 2);
    CHECK(kantran("validate --workers 0").code == 2);
    {
        std::ofstream cfg(d / "typo.cfg");
        cfg << "[U]\nx1 = 0.3\nwidth = 2\n";
    }
    CHECK(kantran("validate --config " + (d / "typo.cfg").string()).code == 2);
    CHECK(kantran("validate --system nope").code == 2);

    // domain error: machine-readable JSON on stderr
    const auto err = (d / "err.txt").string();
    CHECK(kantran("certify --system kan-endo", err).code == 1);
    const auto j = nlohmann::json::parse(slurp(err));
    CHECK(j["error"] == "InvalidArgument");
    CHECK(j.contains("message"));

    CHECK(kantran("intermingle --system kan-endo --width 8 --height 8 --n 10 --depth 3", err).code == 1);
    CHECK(nlohmann::json::parse(slurp(err))["error"] == "DepthTooFine");
}
