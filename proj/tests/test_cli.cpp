#include "doctest.h"
#include "fixtures.hpp"

#include <randctl/csv.hpp>
#include <randctl/problem.hpp>
#include <randctl_cli/app.hpp>
#include <randctl_cli/pipeline.hpp>
#include <randctl_cli/svg.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace randctl;

namespace {

struct Outcome {
    int code = -1;
    std::string output;
};

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::path(RANDCTL_TEST_SCRATCH) / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

/// Runs the installed binary through the shell and captures stdout and stderr.
Outcome run_cli(const std::string& args, const fs::path& dir) {
    const fs::path log = dir / "console.txt";
    const std::string command = std::string("\"") + RANDCTL_EXE + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(command.c_str());
    Outcome o;
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    o.output = fixtures::read_text(log.string());
    return o;
}

std::string config(const std::string& name) {
    return "\"" + fixtures::config_path(name) + "\"";
}

std::string quoted(const fs::path& p) {
    return "\"" + p.string() + "\"";
}

} // namespace

TEST_CASE("simulate writes reproducible bundles") {
    const auto a = scratch("simulate_a");
    const auto b = scratch("simulate_b");
    const auto ra = run_cli("simulate " + config("uncontrolled_decay") + " --paths 10 --out " + quoted(a), a);
    const auto rb = run_cli("simulate " + config("uncontrolled_decay") + " --paths 10 --out " + quoted(b), b);
    REQUIRE(ra.code == 0);
    REQUIRE(rb.code == 0);
    CHECK(ra.output.find("simulated 10 paths") != std::string::npos);
    const auto csv_a = fixtures::read_text((a / "paths.csv").string());
    CHECK(csv_a == fixtures::read_text((b / "paths.csv").string()));
    const auto table = csv::parse(csv_a);
    CHECK(table.column("path") == 0);
    CHECK(table.rows.size() == 10 * 65);

    const auto manifest = nlohmann::json::parse(fixtures::read_text((a / "manifest.json").string()));
    CHECK(manifest.at("command") == "simulate");
    CHECK(manifest.at("outputs").size() == 3);
}

TEST_CASE("usage errors exit with code 2") {
    const auto dir = scratch("usage");
    CHECK(run_cli("simulate /nonexistent/config.json --out " + quoted(dir), dir).code == 2);
    CHECK(run_cli("solve " + config("bang_drift") + " --method magic --out " + quoted(dir), dir).code == 2);
    CHECK(run_cli("frobnicate", dir).code == 2);
    CHECK(run_cli("solve " + config("bang_drift") + " --method dp --ladder 4,2 --out " + quoted(dir), dir).code == 2);

    const auto bad = dir / "bad.json";
    std::ofstream(bad) << "{\"schema_version\": 1, \"family\": \"bang-drift\"";
    const auto r = run_cli("solve " + quoted(bad) + " --method dp --out " + quoted(dir), dir);
    CHECK(r.code == 2);
    CHECK(r.output.find("error:") != std::string::npos);
}

TEST_CASE("solve reports values") {
    SUBCASE("dp") {
        const auto dir = scratch("solve_dp");
        const auto r = run_cli("solve " + config("bang_drift") + " --method dp --out " + quoted(dir), dir);
        REQUIRE(r.code == 0);
        const auto report = nlohmann::json::parse(fixtures::read_text((dir / "value_report.json").string()));
        CHECK(std::abs(report.at("v0_dp").get<double>() - 1.0) <= 1e-2);
        CHECK(fs::exists(dir / "dp.csv"));
    }
    SUBCASE("penalized ladder is monotone") {
        const auto dir = scratch("solve_ladder");
        const auto r = run_cli("solve " + config("bang_drift") + " --method penalized-grid --ladder 1,2,4 --out " +
                                   quoted(dir),
                               dir);
        REQUIRE(r.code == 0);
        const auto ladder = csv::read_file((dir / "ladder.csv").string());
        REQUIRE(ladder.rows.size() == 3);
        for (std::size_t i = 1; i < ladder.rows.size(); ++i) {
            CHECK(csv::to_number(ladder.rows[i][1]) >= csv::to_number(ladder.rows[i - 1][1]) - 1e-6);
        }
        CHECK(fs::exists(dir / "field_n4.csv"));
        CHECK(fs::exists(dir / "field_n4.json"));
    }
}

TEST_CASE("verify runs the invariant suites") {
    SUBCASE("every suite on uncontrolled-decay") {
        const auto dir = scratch("verify_all");
        const auto r =
            run_cli("verify " + config("uncontrolled_decay") + " --paths 2000 --lsmc-paths 2000 --out " + quoted(dir),
                    dir);
        CAPTURE(r.output);
        CHECK(r.code == 0);
        CHECK(r.output.find("overall: pass") != std::string::npos);
        const auto verdicts = csv::read_file((dir / "verdicts.csv").string());
        CHECK(verdicts.header == std::vector<std::string>{"check", "verdict", "detail"});
        CHECK(verdicts.rows.size() >= 6);
    }
    SUBCASE("an unreadable field file is skipped, not failed") {
        const auto dir = scratch("verify_field");
        const auto bogus = dir / "field.csv";
        std::ofstream(bogus) << "t,x0,a,value,level\r\n0,0,0,not-a-number\r\n";
        const auto r = run_cli("verify " + config("uncontrolled_decay") + " --suite monotone --field " +
                                   quoted(bogus) + " --out " + quoted(dir),
                               dir);
        CAPTURE(r.output);
        CHECK(r.code == 0);
        const auto verdicts = csv::read_file((dir / "verdicts.csv").string());
        REQUIRE(!verdicts.rows.empty());
        CHECK(verdicts.rows.front()[0] == "field-file");
        CHECK(verdicts.rows.front()[1] == "skipped");
    }
    SUBCASE("a field written by solve cross-checks") {
        const auto dir = scratch("verify_roundtrip");
        REQUIRE(run_cli("solve " + config("uncontrolled_decay") + " --method penalized-grid --out " + quoted(dir), dir)
                    .code == 0);
        const auto r = run_cli("verify " + config("uncontrolled_decay") + " --suite monotone --field " +
                                   quoted(dir / "field_n4.csv") + " --out " + quoted(dir),
                               dir);
        CAPTURE(r.output);
        CHECK(r.code == 0);
        const auto verdicts = csv::read_file((dir / "verdicts.csv").string());
        CHECK(verdicts.rows.front()[0] == "field-file");
        CHECK(verdicts.rows.front()[1] == "pass");
    }
}

TEST_CASE("plot renders SVG") {
    const auto dir = scratch("plot");
    const auto ladder = dir / "ladder.csv";
    std::ofstream(ladder) << "n,value,se\r\n1,0.5,0\r\n2,0.7,0\r\n4,0.8,0\r\n";
    const auto svg = dir / "ladder.svg";
    const auto r = run_cli("plot " + quoted(ladder) + " --kind value-ladder --out " + quoted(svg), dir);
    REQUIRE(r.code == 0);
    const auto text = fixtures::read_text(svg.string());
    CHECK(text.find("<svg") != std::string::npos);
    const auto manifest = nlohmann::json::parse(fixtures::read_text((dir / "manifest.json").string()));
    bool listed = false;
    for (const auto& o : manifest.at("outputs")) {
        listed = listed || o.get<std::string>().find("ladder.svg") != std::string::npos;
    }
    CHECK(listed);

    const auto empty = dir / "empty.csv";
    std::ofstream(empty) << "n,value,se\r\n";
    CHECK(run_cli("plot " + quoted(empty) + " --kind value-ladder --out " + quoted(dir / "e.svg"), dir).code == 2);
    CHECK(run_cli("plot " + quoted(ladder) + " --kind pie --out " + quoted(dir / "p.svg"), dir).code == 2);
}

TEST_CASE("in-process helpers") {
    CHECK(cli::parse_suite("value-equality") == cli::Suite::value_equality);
    CHECK_FALSE(cli::parse_suite("everything").has_value());
    CHECK(cli::parse_plot_kind("path-fan") == cli::PlotKind::path_fan);

    const auto fan = csv::parse("path,t,x0\n0,0,1\n0,1,2\n1,0,1\n1,1,0\n");
    const auto svg = cli::render_svg(cli::PlotKind::path_fan, fan);
    CHECK(svg.rfind("<?xml", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(svg == cli::render_svg(cli::PlotKind::path_fan, fan));

    const auto heat = csv::parse("t,x0,residual\n0,0,0.1\n0,1,0.2\n0.5,0,0.3\n");
    CHECK_NOTHROW(cli::render_svg(cli::PlotKind::residual_heatmap, heat));
    CHECK_THROWS_AS(cli::render_svg(cli::PlotKind::residual_heatmap, fan), ValidationError);

    std::ostringstream out;
    std::ostringstream err;
    CHECK(cli::run({"randctl", "--version"}, out, err) == 0);
    CHECK(cli::run({"randctl"}, out, err) == cli::kExitUsage);
}
