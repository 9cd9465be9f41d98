#include "randctl_cli/app.hpp"

#include "randctl_cli/pipeline.hpp"
#include "randctl_cli/svg.hpp"

#include <randctl/csv.hpp>
#include <randctl/report.hpp>
#include <randctl/sim.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace randctl::cli {

namespace {

namespace fs = std::filesystem;

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "randctl-out";
    std::optional<double> spu;
    std::vector<int> nodes;
    std::optional<std::size_t> paths;
    std::optional<std::size_t> lsmc_paths;
};

class Run {
public:
    Run(std::string command, std::ostream& out) : out_(out), start_(std::chrono::steady_clock::now()) {
        manifest_.command = std::move(command);
        manifest_.tool_version = RANDCTL_VERSION;
    }

    RunManifest& manifest() { return manifest_; }

    void prepare_dir(const std::string& dir) {
        manifest_.output_directory = dir;
        fs::create_directories(dir);
    }

    /// Writes a file in binary mode (CSV line endings are part of the contract).
    template <class Fn>
    void write(const std::string& name, Fn&& body) {
        const fs::path path = fs::path(manifest_.output_directory) / name;
        std::ofstream f(path, std::ios::binary);
        if (!f) {
            throw ValidationError("out", "cannot write '" + path.string() + "'");
        }
        body(f);
        manifest_.outputs.push_back(path.string());
    }

    void finish() {
        manifest_.wall_clock_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        const fs::path path = fs::path(manifest_.output_directory) / "manifest.json";
        manifest_.outputs.push_back(path.string());
        std::ofstream f(path, std::ios::binary);
        f << manifest_.to_json() << '\n';
        out_ << "manifest: " << path.string() << '\n';
    }

private:
    std::ostream& out_;
    std::chrono::steady_clock::time_point start_;
    RunManifest manifest_;
};

void add_common(CLI::App& cmd, CommonOptions& o, bool grid_options) {
    cmd.add_option("config", o.config_path, "Problem configuration (JSON)")->required();
    cmd.add_option("--seed", o.seed, "Master seed (overrides solver.seed)");
    cmd.add_option("--out", o.out_dir, "Output directory")->capture_default_str();
    if (grid_options) {
        cmd.add_option("--spu", o.spu, "Time steps per unit time")->check(CLI::PositiveNumber);
        cmd.add_option("--nodes", o.nodes, "State-grid nodes per coordinate")->delimiter(',');
    }
}

RunConfig load(const CommonOptions& o, RunManifest& manifest) {
    if (!fs::exists(o.config_path)) {
        throw ValidationError("config", "file not found: '" + o.config_path + "'");
    }
    RunConfig config = load_config_file(o.config_path);
    manifest.config_path = o.config_path;
    if (o.seed) {
        config.solver.seed = *o.seed;
    }
    manifest.seed = config.solver.seed;
    if (o.spu) {
        config.solver.steps_per_unit_time = *o.spu;
        manifest.grid_overrides["steps_per_unit_time"] = csv::format_number(*o.spu);
    }
    if (!o.nodes.empty()) {
        const auto dims = static_cast<std::size_t>(config.problem.state_dim());
        if (o.nodes.size() != 1 && o.nodes.size() != dims) {
            throw ValidationError("nodes", "expected 1 or " + std::to_string(dims) + " entries");
        }
        for (int n : o.nodes) {
            if (n < 3) {
                throw ValidationError("nodes", "each coordinate needs at least 3 nodes");
            }
        }
        std::vector<int> per(dims, o.nodes.front());
        if (o.nodes.size() == dims) {
            per = o.nodes;
        }
        if (config.solver.grid) {
            config.solver.grid->nodes = per;
        } else {
            // Pilot grids use one count for every coordinate.
            config.solver.pilot.nodes_1d = config.solver.pilot.nodes_2d = config.solver.pilot.nodes_3d = per.front();
        }
        std::string text;
        for (int n : per) {
            text += (text.empty() ? "" : ",") + std::to_string(n);
        }
        manifest.grid_overrides["nodes"] = text;
    }
    if (o.paths) {
        config.solver.paths = *o.paths;
        manifest.grid_overrides["paths"] = std::to_string(*o.paths);
    }
    if (o.lsmc_paths) {
        config.solver.lsmc_paths = *o.lsmc_paths;
        manifest.grid_overrides["lsmc_paths"] = std::to_string(*o.lsmc_paths);
    }
    return config;
}

void print_table(std::ostream& out, const std::vector<CheckResult>& checks) {
    std::size_t width = 5;
    for (const auto& c : checks) {
        width = std::max(width, c.name.size());
    }
    for (const auto& c : checks) {
        out << std::left << std::setw(static_cast<int>(width) + 2) << c.name << std::setw(9) << to_string(c.verdict)
            << c.detail << '\n';
    }
}

int cmd_simulate(const CommonOptions& o, std::size_t paths, std::ostream& out) {
    Run run("simulate", out);
    const auto config = load(o, run.manifest());
    run.prepare_dir(o.out_dir);
    BundleOptions opts;
    opts.paths = paths;
    opts.n_steps = static_cast<std::size_t>(
        std::max(1.0, std::ceil(config.solver.steps_per_unit_time * config.problem.horizon - 1e-9)));
    opts.seed = config.solver.seed;
    const auto bundle = simulate_bundle(config.problem, opts);
    run.write("paths.csv", [&](std::ostream& f) { write_bundle_csv(config.problem, bundle, f); });
    run.write("paths.json", [&](std::ostream& f) { f << bundle_metadata_json(config.problem, bundle) << '\n'; });
    out << "simulated " << bundle.paths.size() << " paths x " << bundle.n_steps << " steps";
    if (bundle.overflow_count > 0) {
        out << " (warning: " << bundle.overflow_count << " overflowed paths excluded)";
    }
    out << '\n';
    run.finish();
    return kExitOk;
}

void write_ladder_csv(std::ostream& f, const std::vector<LadderEntry>& levels) {
    csv::Writer w(f);
    w.header({"n", "value", "se"});
    for (const auto& l : levels) {
        w.row({std::to_string(l.level_n), csv::format_number(l.value), csv::format_number(l.standard_error)});
    }
}

int cmd_solve(const CommonOptions& o, const std::string& method, const std::vector<int>& ladder, std::ostream& out) {
    Run run("solve --method " + method, out);
    auto config = load(o, run.manifest());
    if (!ladder.empty()) {
        config.solver.ladder = ladder;
    }
    for (std::size_t i = 0; i < config.solver.ladder.size(); ++i) {
        if (config.solver.ladder[i] < 1 || (i > 0 && config.solver.ladder[i] <= config.solver.ladder[i - 1])) {
            throw ValidationError("ladder", "levels must be positive and strictly increasing");
        }
    }
    run.prepare_dir(o.out_dir);
    const auto& spec = config.problem;
    const auto lattice = make_lattice(config);

    ValueReport report;
    report.problem = spec.name;
    std::vector<LadderEntry> levels;
    if (method == "dp") {
        const auto dp = solve_dp(config, lattice);
        report.v0_dp = dp.value_at(0, spec.initial_state(spec.initial_law.mean));
        run.write("dp.csv", [&](std::ostream& f) { write_dp_csv(spec, dp, f); });
        if (dp.clamps.warn()) {
            out << "warning: " << dp.clamps.fraction() * 100.0 << "% of transition mass clamped at the grid edge\n";
        }
        out << "V0_dp = " << csv::format_number(*report.v0_dp) << '\n';
    } else if (method == "penalized-grid") {
        const auto fields = solve_ladder(config, lattice);
        for (const auto& field : fields) {
            const std::string stem = "field_n" + std::to_string(field.level_n);
            run.write(stem + ".csv", [&](std::ostream& f) { write_field_csv(spec, field, f); });
            run.write(stem + ".json", [&](std::ostream& f) { f << field_metadata_json(spec, field) << '\n'; });
            if (field.clamps.warn()) {
                out << "warning: level " << field.level_n << ": " << field.clamps.fraction() * 100.0
                    << "% of transition mass clamped at the grid edge\n";
            }
        }
        levels = ladder_values(spec, fields);
    } else {
        levels = solve_lsmc_ladder(config, lattice);
    }
    if (!levels.empty()) {
        const auto extrapolation = config.solver.extrapolation;
        const auto mv = minimal_value(levels, extrapolation, config.tolerances.tol_mono);
        for (const auto& l : levels) {
            report.v0_bsde.push_back({l.level_n, l.value, l.standard_error});
            out << "n=" << l.level_n << "  v0 = " << csv::format_number(l.value);
            if (l.standard_error > 0.0) {
                out << "  (se " << csv::format_number(l.standard_error) << ")";
            }
            out << '\n';
        }
        report.v0_bsde_limit = mv.limit;
        report.checks.push_back({"monotone-v0", mv.monotone ? Verdict::pass : Verdict::fail,
                                 "largest drop " + csv::format_number(mv.max_violation)});
        out << "limit (" << to_string(extrapolation) << ") = " << csv::format_number(mv.limit) << '\n';
        run.write("ladder.csv", [&](std::ostream& f) { write_ladder_csv(f, levels); });
    }
    run.write("value_report.json", [&](std::ostream& f) { f << report.to_json() << '\n'; });
    run.manifest().verdicts = report.checks;
    run.finish();
    return combine(report.checks) == Verdict::fail ? kExitCheckFailed : kExitOk;
}

int cmd_verify(const CommonOptions& o, const std::string& suite_name, const std::optional<std::string>& field,
               std::ostream& out) {
    Run run("verify --suite " + suite_name, out);
    const auto config = load(o, run.manifest());
    run.prepare_dir(o.out_dir);
    const auto checks = run_suite(*parse_suite(suite_name), config, field);
    print_table(out, checks);
    const auto overall = combine(checks);
    out << "overall: " << to_string(overall) << '\n';
    run.manifest().verdicts = checks;
    run.write("verdicts.csv", [&](std::ostream& f) {
        csv::Writer w(f);
        w.header({"check", "verdict", "detail"});
        for (const auto& c : checks) {
            w.row({c.name, std::string(to_string(c.verdict)), c.detail});
        }
    });
    run.finish();
    return overall == Verdict::fail ? kExitCheckFailed : kExitOk;
}

int cmd_plot(const std::string& input, const std::string& kind, const std::string& output, std::ostream& out) {
    Run run("plot --kind " + kind, out);
    if (!fs::exists(input)) {
        throw ValidationError("input", "file not found: '" + input + "'");
    }
    run.manifest().config_path = input;
    const auto table = csv::read_file(input);
    const auto svg = render_svg(*parse_plot_kind(kind), table);
    const fs::path target(output);
    run.prepare_dir(target.has_parent_path() ? target.parent_path().string() : ".");
    run.write(target.filename().string(), [&](std::ostream& f) { f << svg; });
    run.finish();
    return kExitOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Randomized stochastic control toolkit"};
    app.name("randctl");
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(RANDCTL_VERSION));

    CommonOptions common;
    std::size_t sim_paths = 100;
    auto* simulate = app.add_subcommand("simulate", "Simulate a seeded path bundle");
    add_common(*simulate, common, true);
    simulate->add_option("--paths", sim_paths, "Number of paths")->capture_default_str()->check(CLI::PositiveNumber);

    std::string method;
    std::vector<int> ladder;
    auto* solve = app.add_subcommand("solve", "Solve for the value function");
    add_common(*solve, common, true);
    solve->add_option("--method", method, "Solver")
        ->required()
        ->check(CLI::IsMember({"penalized-grid", "penalized-lsmc", "dp"}));
    solve->add_option("--ladder", ladder, "Penalization levels, e.g. 1,2,4,8")->delimiter(',');
    solve->add_option("--paths", common.lsmc_paths, "Regression paths for penalized-lsmc");

    std::string suite = "all";
    std::optional<std::string> field;
    auto* verify = app.add_subcommand("verify", "Run the invariant suite");
    add_common(*verify, common, true);
    verify->add_option("--suite", suite, "Which checks to run")
        ->capture_default_str()
        ->check(CLI::IsMember({"all", "martingale", "monotone", "constraint", "dpp", "value-equality", "hjb"}));
    verify->add_option("--field", field, "Previously written penalized field CSV to cross-check");
    verify->add_option("--paths", common.paths, "Monte Carlo paths per estimate");
    verify->add_option("--lsmc-paths", common.lsmc_paths, "Regression paths for the Feynman-Kac check");

    std::string input;
    std::string kind;
    std::string plot_out;
    auto* plot = app.add_subcommand("plot", "Render a CSV artifact as SVG");
    plot->add_option("input", input, "Input CSV")->required();
    plot->add_option("--kind", kind, "Plot type")
        ->required()
        ->check(CLI::IsMember({"value-ladder", "residual-heatmap", "path-fan"}));
    plot->add_option("--out", plot_out, "Output SVG path")->required();

    std::vector<const char*> argv;
    argv.reserve(args.size());
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*simulate) {
            return cmd_simulate(common, sim_paths, out);
        }
        if (*solve) {
            return cmd_solve(common, method, ladder, out);
        }
        if (*verify) {
            return cmd_verify(common, suite, field, out);
        }
        return cmd_plot(input, kind, plot_out, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
}

} // namespace randctl::cli
