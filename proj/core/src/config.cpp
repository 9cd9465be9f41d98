#include "randctl/config.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace randctl {

using nlohmann::json;

std::string_view to_string(KernelMode mode) noexcept {
    return mode == KernelMode::quadrature ? "quadrature" : "monte-carlo";
}

std::string_view to_string(Extrapolation e) noexcept { return e == Extrapolation::last ? "last" : "richardson"; }

std::optional<Extrapolation> parse_extrapolation(std::string_view name) noexcept {
    if (name == "last") {
        return Extrapolation::last;
    }
    if (name == "richardson") {
        return Extrapolation::richardson;
    }
    return std::nullopt;
}

namespace {

template <class T>
void read(const json& node, const char* key, T& target, const std::string& section) {
    const auto it = node.find(key);
    if (it == node.end()) {
        return;
    }
    try {
        target = it->get<T>();
    } catch (const json::exception&) {
        throw ValidationError(section + "." + key, "wrong type");
    }
}

void positive(double v, const std::string& field) {
    if (!(v > 0.0)) {
        throw ValidationError(field, "must be > 0");
    }
}

SolverSettings parse_solver(const json& node) {
    SolverSettings s;
    if (node.is_null()) {
        return s;
    }
    if (!node.is_object()) {
        throw ValidationError("solver", "expected an object");
    }
    const std::string sec = "solver";
    read(node, "steps_per_unit_time", s.steps_per_unit_time, sec);
    read(node, "ladder", s.ladder, sec);
    if (const auto it = node.find("extrapolation"); it != node.end()) {
        const auto e = it->is_string() ? parse_extrapolation(it->get<std::string>()) : std::nullopt;
        if (!e) {
            throw ValidationError("solver.extrapolation", "expected last | richardson");
        }
        s.extrapolation = *e;
    }
    if (const auto it = node.find("grid"); it != node.end() && !it->is_null()) {
        GridOverride g;
        read(*it, "lower", g.lower, "solver.grid");
        read(*it, "upper", g.upper, "solver.grid");
        read(*it, "nodes", g.nodes, "solver.grid");
        if (g.lower.empty() || g.lower.size() != g.upper.size() || g.lower.size() != g.nodes.size()) {
            throw ValidationError("solver.grid", "lower, upper and nodes need one entry per state coordinate");
        }
        for (std::size_t i = 0; i < g.lower.size(); ++i) {
            if (!(g.lower[i] < g.upper[i]) || g.nodes[i] < 2) {
                throw ValidationError("solver.grid", "need lower < upper and at least 2 nodes");
            }
        }
        s.grid = g;
    }
    if (const auto it = node.find("pilot"); it != node.end()) {
        read(*it, "paths", s.pilot.paths, "solver.pilot");
        read(*it, "sd_multiple", s.pilot.sd_multiple, "solver.pilot");
        read(*it, "pad_fraction", s.pilot.pad_fraction, "solver.pilot");
        read(*it, "min_pad", s.pilot.min_pad, "solver.pilot");
        read(*it, "nodes_1d", s.pilot.nodes_1d, "solver.pilot");
        read(*it, "nodes_2d", s.pilot.nodes_2d, "solver.pilot");
        read(*it, "nodes_3d", s.pilot.nodes_3d, "solver.pilot");
    }
    if (const auto it = node.find("kernel"); it != node.end()) {
        if (const auto m = it->find("mode"); m != it->end()) {
            const auto name = m->is_string() ? m->get<std::string>() : std::string{};
            if (name == "quadrature") {
                s.kernel.mode = KernelMode::quadrature;
            } else if (name == "monte-carlo") {
                s.kernel.mode = KernelMode::monte_carlo;
            } else {
                throw ValidationError("solver.kernel.mode", "expected quadrature | monte-carlo");
            }
        }
        read(*it, "hermite_nodes", s.kernel.hermite_nodes, "solver.kernel");
        read(*it, "mark_nodes", s.kernel.mark_nodes, "solver.kernel");
        read(*it, "max_jumps", s.kernel.max_jumps, "solver.kernel");
        read(*it, "inner_samples", s.kernel.inner_samples, "solver.kernel");
    }
    read(node, "paths", s.paths, sec);
    read(node, "lsmc_paths", s.lsmc_paths, sec);
    read(node, "lsmc_degree", s.lsmc_degree, sec);
    read(node, "ridge", s.ridge, sec);
    read(node, "nu_min", s.nu_min, sec);
    read(node, "girsanov_level", s.girsanov_level, sec);
    read(node, "girsanov_nu_min", s.girsanov_nu_min, sec);
    read(node, "dpp_fraction", s.dpp_fraction, sec);
    read(node, "seed", s.seed, sec);

    positive(s.steps_per_unit_time, "solver.steps_per_unit_time");
    if (s.ladder.empty()) {
        throw ValidationError("solver.ladder", "must be nonempty");
    }
    for (std::size_t i = 0; i < s.ladder.size(); ++i) {
        if (s.ladder[i] < 1 || (i > 0 && s.ladder[i] <= s.ladder[i - 1])) {
            throw ValidationError("solver.ladder", "levels must be positive and strictly increasing");
        }
    }
    if (s.kernel.hermite_nodes < 1 || s.kernel.mark_nodes < 1 || s.kernel.max_jumps < 0 ||
        s.kernel.inner_samples < 1) {
        throw ValidationError("solver.kernel", "node counts must be positive");
    }
    if (s.lsmc_degree < 1) {
        throw ValidationError("solver.lsmc_degree", "must be >= 1");
    }
    positive(s.nu_min, "solver.nu_min");
    positive(s.girsanov_nu_min, "solver.girsanov_nu_min");
    if (s.girsanov_level < 1) {
        throw ValidationError("solver.girsanov_level", "must be >= 1");
    }
    if (!(s.dpp_fraction > 0.0 && s.dpp_fraction <= 1.0)) {
        throw ValidationError("solver.dpp_fraction", "must lie in (0, 1]");
    }
    return s;
}

Tolerances parse_tolerances(const json& node) {
    Tolerances t;
    if (node.is_null()) {
        return t;
    }
    const std::string sec = "tolerances";
    read(node, "tol_value", t.tol_value, sec);
    read(node, "tol_grid", t.tol_grid, sec);
    read(node, "tol_mono", t.tol_mono, sec);
    read(node, "tol_hjb", t.tol_hjb, sec);
    read(node, "tol_exact", t.tol_exact, sec);
    read(node, "se_multiple", t.se_multiple, sec);
    for (double v : {t.tol_value, t.tol_grid, t.tol_mono, t.tol_hjb, t.tol_exact, t.se_multiple}) {
        if (!(v >= 0.0)) {
            throw ValidationError(sec, "tolerances must be >= 0");
        }
    }
    return t;
}

} // namespace

RunConfig load_config(std::string_view json_text, const LoadOptions& options) {
    RunConfig config;
    config.problem = load_problem(json_text, options);
    // load_problem has already rejected malformed text.
    const json doc = json::parse(json_text.begin(), json_text.end());
    config.solver = parse_solver(doc.value("solver", json()));
    config.tolerances = parse_tolerances(doc.value("tolerances", json()));
    if (config.solver.grid && config.solver.grid->lower.size() != static_cast<std::size_t>(config.problem.state_dim())) {
        throw ValidationError("solver.grid", "needs one entry per state coordinate");
    }
    return config;
}

RunConfig load_config_file(const std::string& path, const LoadOptions& options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("config", "cannot open '" + path + "'");
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return load_config(buffer.str(), options);
}

std::string to_json(const SolverSettings& s) {
    json j = {{"steps_per_unit_time", s.steps_per_unit_time},
              {"ladder", s.ladder},
              {"extrapolation", std::string(to_string(s.extrapolation))},
              {"kernel",
               {{"mode", std::string(to_string(s.kernel.mode))},
                {"hermite_nodes", s.kernel.hermite_nodes},
                {"mark_nodes", s.kernel.mark_nodes},
                {"max_jumps", s.kernel.max_jumps},
                {"inner_samples", s.kernel.inner_samples}}},
              {"pilot",
               {{"paths", s.pilot.paths},
                {"sd_multiple", s.pilot.sd_multiple},
                {"pad_fraction", s.pilot.pad_fraction},
                {"min_pad", s.pilot.min_pad},
                {"nodes_1d", s.pilot.nodes_1d},
                {"nodes_2d", s.pilot.nodes_2d},
                {"nodes_3d", s.pilot.nodes_3d}}},
              {"paths", s.paths},
              {"lsmc_paths", s.lsmc_paths},
              {"lsmc_degree", s.lsmc_degree},
              {"ridge", s.ridge},
              {"nu_min", s.nu_min},
              {"girsanov_level", s.girsanov_level},
              {"girsanov_nu_min", s.girsanov_nu_min},
              {"dpp_fraction", s.dpp_fraction},
              {"seed", s.seed}};
    if (s.grid) {
        j["grid"] = {{"lower", s.grid->lower}, {"upper", s.grid->upper}, {"nodes", s.grid->nodes}};
    }
    return j.dump();
}

std::string to_json(const Tolerances& t) {
    return json{{"tol_value", t.tol_value},
                {"tol_grid", t.tol_grid},
                {"tol_mono", t.tol_mono},
                {"tol_hjb", t.tol_hjb},
                {"tol_exact", t.tol_exact},
                {"se_multiple", t.se_multiple}}
        .dump();
}

} // namespace randctl
