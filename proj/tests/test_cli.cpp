#include "doctest.h"

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CmdResult run_cli(const std::string& args) {
    const std::string cmd = std::string(PERFSIM_CLI_PATH) + " " + args +
                            " > cli_stdout.tmp 2> cli_stderr.tmp";
    const int status = std::system(cmd.c_str());
    CmdResult res;
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    res.out = slurp("cli_stdout.tmp");
    res.err = slurp("cli_stderr.tmp");
    return res;
}

// Parses a CSV artifact: returns header names and numeric-ish cells as
// strings, skipping "#" comment lines.
struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> comments;

    int col(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) {
                return static_cast<int>(i);
            }
        }
        return -1;
    }
};

Csv parse_csv(const std::string& text) {
    Csv csv;
    std::istringstream in(text);
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        if (line[0] == '#') {
            csv.comments.push_back(line);
            continue;
        }
        std::vector<std::string> cells;
        std::string cell;
        std::stringstream ss(line);
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        if (line.back() == ',') {
            cells.push_back("");
        }
        if (!header_seen) {
            csv.header = cells;
            header_seen = true;
        } else {
            csv.rows.push_back(cells);
        }
    }
    return csv;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("solve reports the closed forms as json") {
    const CmdResult res = run_cli(
        "solve --sigma0 0.5 --sigma 0.5 --mu0 1 --mu 0 --format json");
    REQUIRE(res.exit_code == 0);
    const auto j = nlohmann::json::parse(res.out);
    CHECK(j.at("theta_ps").get<double>() == doctest::Approx(1.0));
    CHECK(j.at("theta_po").get<double>() == doctest::Approx(0.6));
    CHECK(std::abs(j.at("gap").get<double>() - 0.1) < 1e-12);
    CHECK(j.at("lambda_star").get<double>() ==
          doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(j.at("config").at("shift").at("sigma0").get<double>() == 0.5);
    CHECK(j.at("config").at("shift").at("mu").get<double>() == 0.0);
    CHECK(j.at("version").get<std::string>().find("perfsim") !=
          std::string::npos);
}

TEST_CASE("solve prints an aligned table by default") {
    const CmdResult res = run_cli("solve --sigma0 0.5 --sigma 0.5 --mu0 1");
    REQUIRE(res.exit_code == 0);
    CHECK(res.out.find("theta_ps") != std::string::npos);
    CHECK(res.out.find("lambda_star") != std::string::npos);
}

TEST_CASE("solve rejects non-contractive instances with the regime code") {
    const CmdResult res = run_cli("solve --mu0 1 --mu 1.5");
    CHECK(res.exit_code == 2);
    CHECK(res.err.find("regime") != std::string::npos);
}

TEST_CASE("run produces the exact retraining trajectory as csv") {
    const CmdResult res =
        run_cli("run --algo rrm --mu0 1 --mu 0.5 -T 3");
    REQUIRE(res.exit_code == 0);
    const Csv csv = parse_csv(res.out);
    REQUIRE(csv.comments.size() >= 2);
    CHECK(csv.comments[0].find("# version:") == 0);
    CHECK(csv.comments[1].find("# config:") == 0);
    REQUIRE(csv.header.size() == 8);
    CHECK(csv.header[0] == "t");
    CHECK(csv.header[1] == "theta0");
    CHECK(csv.header[2] == "N_t");
    CHECK(csv.header[7] == "diverged");
    REQUIRE(csv.rows.size() == 4);
    const double expected[] = {0.0, 1.0, 1.5, 1.75};
    for (int t = 0; t < 4; ++t) {
        CHECK(std::stod(csv.rows[t][1]) ==
              doctest::Approx(expected[t]).epsilon(1e-15));
        CHECK(csv.rows[t][2] == "");  // exact mode: no sample count
        CHECK(csv.rows[t][7] == "0");
    }
    // Metrics columns are filled when the regime admits references.
    CHECK(csv.rows[0][5] != "");
}

TEST_CASE("run resolves the ridge weight token") {
    const CmdResult res = run_cli(
        "run --algo reg-rrm --reg ridge --lambda star --sigma0 0.5 "
        "--sigma 0.5 --mu0 1 --mu 0 -T 50");
    REQUIRE(res.exit_code == 0);
    const Csv csv = parse_csv(res.out);
    REQUIRE(csv.rows.size() == 51);
    const double last = std::stod(csv.rows.back()[1]);
    CHECK(std::abs(last - 0.6) < 1e-10);
    const double lam = std::stod(csv.rows.back()[3]);
    CHECK(lam == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("run accepts a literal ridge weight") {
    const CmdResult res = run_cli(
        "run --algo reg-rrm --reg ridge --lambda 0.6666666666666666 "
        "--sigma0 0.5 --sigma 0.5 --mu0 1 --mu 0 -T 50");
    REQUIRE(res.exit_code == 0);
    const Csv csv = parse_csv(res.out);
    const double last = std::stod(csv.rows.back()[1]);
    CHECK(std::abs(last - 0.6) < 1e-10);
}

TEST_CASE("star token without a usable ridge weight is a regime error") {
    const CmdResult res = run_cli(
        "run --algo reg-rrm --reg ridge --lambda star --sigma0 1 "
        "--sigma 0.5 --mu0 1 --mu 0.5 -T 10");
    CHECK(res.exit_code == 2);
}

TEST_CASE("repeated runs are byte identical") {
    const std::string args =
        "run --algo rerm --mu0 1 --mu 0.5 --N 4 -T 20 --seed 7 ";
    const CmdResult a = run_cli(args + "--out cli_run_a.csv");
    const CmdResult b = run_cli(args + "--out cli_run_b.csv");
    REQUIRE(a.exit_code == 0);
    REQUIRE(b.exit_code == 0);
    const std::string fa = slurp("cli_run_a.csv");
    const std::string fb = slurp("cli_run_b.csv");
    CHECK(fa == fb);
    CHECK(!fa.empty());
    // A different seed must change the artifact.
    const CmdResult c = run_cli(args + "--out cli_run_c.csv");
    (void)c;
    const CmdResult d = run_cli(
        "run --algo rerm --mu0 1 --mu 0.5 --N 4 -T 20 --seed 8 "
        "--out cli_run_d.csv");
    REQUIRE(d.exit_code == 0);
    CHECK(slurp("cli_run_d.csv") != fa);
}

TEST_CASE("divergence is reported in-band, not as an error") {
    const CmdResult res = run_cli("run --algo rrm --mu0 1 --mu 1.5 -T 80");
    REQUIRE(res.exit_code == 0);
    const Csv csv = parse_csv(res.out);
    CHECK(csv.rows.size() < 81);
    CHECK(csv.rows.back()[7] == "1");
}

TEST_CASE("unknown config keys fail fast") {
    {
        std::ofstream f("cli_bad.json");
        f << "{\"shift\": {\"d\": 1}, \"bogus\": 1}\n";
    }
    const CmdResult res = run_cli("solve --config cli_bad.json");
    CHECK(res.exit_code == 1);
    CHECK(res.err.find("bogus") != std::string::npos);
    {
        std::ofstream f("cli_bad2.json");
        f << "{\"shift\": {\"sigma0\": 1, \"typo\": 2}}\n";
    }
    const CmdResult res2 = run_cli("solve --config cli_bad2.json");
    CHECK(res2.exit_code == 1);
    CHECK(res2.err.find("shift.typo") != std::string::npos);
}

TEST_CASE("config files drive runs and flags override them") {
    {
        std::ofstream f("cli_cfg.json");
        f << "{\"seed\": 3, \"shift\": {\"sigma0\": 1, \"mu0\": 1, "
             "\"mu\": 0.5}, \"run\": {\"algo\": \"rrm\", \"T\": 3}}\n";
    }
    const CmdResult res = run_cli("run --config cli_cfg.json");
    REQUIRE(res.exit_code == 0);
    const Csv csv = parse_csv(res.out);
    REQUIRE(csv.rows.size() == 4);
    CHECK(std::stod(csv.rows[3][1]) == doctest::Approx(1.75));
    // Flag overrides the file value.
    const CmdResult res2 = run_cli("run --config cli_cfg.json --mu0 2");
    const Csv csv2 = parse_csv(res2.out);
    CHECK(std::stod(csv2.rows[3][1]) == doctest::Approx(3.5));
}

TEST_CASE("vector configs solve the mean-shift fixed point") {
    {
        std::ofstream f("cli_vec.json");
        f << "{\"shift\": {\"d\": 2, \"sigma0\": 1, \"mu0\": [1, 2], "
             "\"mu\": [[0.5, 0], [0, 0.5]]}}\n";
    }
    const CmdResult res =
        run_cli("solve --config cli_vec.json --format json");
    REQUIRE(res.exit_code == 0);
    const auto j = nlohmann::json::parse(res.out);
    CHECK(j.at("theta_ps").at(0).get<double>() == doctest::Approx(2.0));
    CHECK(j.at("theta_ps").at(1).get<double>() == doctest::Approx(4.0));
    CHECK(j.at("gap").get<double>() == 0.0);
}

TEST_CASE("sweep enumerates the grid in canonical order") {
    const CmdResult res = run_cli(
        "sweep --grid sigma=0,0.5,1 --grid mu=0,0.5 --metrics relative_gap "
        "--mu0 1 --sigma0 1");
    REQUIRE(res.exit_code == 0);
    const Csv csv = parse_csv(res.out);
    REQUIRE(csv.header.size() == 3);
    CHECK(csv.header[0] == "sigma");
    CHECK(csv.header[1] == "mu");
    CHECK(csv.header[2] == "relative_gap");
    REQUIRE(csv.rows.size() == 6);
    const double expected[] = {0.0, 0.0, 0.25, 1.0, 1.0, 4.0};
    for (int i = 0; i < 6; ++i) {
        CHECK(std::stod(csv.rows[i][2]) ==
              doctest::Approx(expected[i]).epsilon(1e-12));
    }
    CHECK(std::stod(csv.rows[2][0]) == 0.5);
    CHECK(std::stod(csv.rows[2][1]) == 0.0);
}

TEST_CASE("sweep rejects unknown grid keys and metrics") {
    CHECK(run_cli("sweep --grid nope=1,2").exit_code == 1);
    CHECK(run_cli("sweep --grid mu=0,0.5 --metrics nope").exit_code == 1);
    CHECK(run_cli("sweep").exit_code == 1);
}

TEST_CASE("experiment command reports a pass line and an artifact") {
    const CmdResult res = run_cli(
        "experiment gap-identity --reps 20000 --out cli_exp.json");
    REQUIRE(res.exit_code == 0);
    CHECK(res.out.find("[PASS] gap-identity") != std::string::npos);
    const auto j = nlohmann::json::parse(slurp("cli_exp.json"));
    CHECK(j.at("results").size() == 1);
    CHECK(j.at("results").at(0).at("pass").get<bool>());
    CHECK(j.at("results").at(0).at("details").size() >= 3);
    CHECK(j.at("config").at("experiment").at("name").get<std::string>() ==
          "gap-identity");
}

TEST_CASE("experiment failures map to the check exit code") {
    // At a horizon this short the scheduled decay target is not yet met,
    // so the check honestly fails.
    const CmdResult res =
        run_cli("experiment schedules --reps 100 -T 10");
    CHECK(res.exit_code == 3);
    CHECK(res.out.find("[FAIL] schedules") != std::string::npos);
}

TEST_CASE("unknown experiment names are config errors") {
    CHECK(run_cli("experiment does-not-exist").exit_code == 1);
}

TEST_CASE("schedule and mode mismatches use the regime exit code") {
    const CmdResult res = run_cli(
        "run --algo rerm --mode integer --samples inverse-t --mu0 1 "
        "--mu 0.5 -T 5");
    CHECK(res.exit_code == 2);
}

TEST_CASE("version flag prints the tool identity") {
    const CmdResult res = run_cli("--version");
    CHECK(res.exit_code == 0);
    CHECK(res.out.find("perfsim") != std::string::npos);
}

TEST_CASE("check alias runs every experiment") {
    const CmdResult res = run_cli(
        "check --reps 500 -T 600 --out cli_check.json");
    REQUIRE(res.exit_code == 0);
    const auto j = nlohmann::json::parse(slurp("cli_check.json"));
    CHECK(j.at("results").size() == 6);
    int pass_lines = 0;
    std::istringstream ss(res.out);
    std::string line;
    while (std::getline(ss, line)) {
        if (line.rfind("[PASS]", 0) == 0 || line.rfind("[SKIP]", 0) == 0) {
            ++pass_lines;
        }
    }
    CHECK(pass_lines == 6);
}

TEST_CASE("experiment artifacts are byte identical across thread counts") {
    const std::string base =
        "experiment rerm-mse --reps 2000 --seed 11 --format json ";
    REQUIRE(run_cli(base + "--threads 1 --out cli_t1.json").exit_code == 0);
    REQUIRE(run_cli(base + "--threads 4 --out cli_t4.json").exit_code == 0);
    const std::string a = slurp("cli_t1.json");
    CHECK(!a.empty());
    CHECK(a == slurp("cli_t4.json"));
    CHECK(a.find("\"threads\"") == std::string::npos);
}

}  // TEST_SUITE
