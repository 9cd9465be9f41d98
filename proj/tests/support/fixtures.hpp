#pragma once

#include "json.hpp"

#include <randctl/config.hpp>

#include <functional>
#include <string>

namespace fixtures {

using Patch = std::function<void(nlohmann::json&)>;

/// Absolute path of a shipped config, e.g. config_path("bang_drift").
std::string config_path(const std::string& name);

std::string read_text(const std::string& path);

/// Loads a shipped config after applying `patch` to its JSON document.
randctl::RunConfig load(const std::string& name, const Patch& patch = {});

inline randctl::ProblemSpec problem(const std::string& name, const Patch& patch = {}) {
    return load(name, patch).problem;
}

/// Explicit one-dimensional state grid.
inline Patch grid_1d(double lower, double upper, int nodes) {
    return [=](nlohmann::json& j) {
        j["solver"]["grid"] = {{"lower", {lower}}, {"upper", {upper}}, {"nodes", {nodes}}};
    };
}

inline Patch chain(Patch a, Patch b) {
    return [a = std::move(a), b = std::move(b)](nlohmann::json& j) {
        if (a) {
            a(j);
        }
        if (b) {
            b(j);
        }
    };
}

} // namespace fixtures
