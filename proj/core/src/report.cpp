#include "randctl/report.hpp"

#include <json.hpp>

namespace randctl {

namespace {

nlohmann::json checks_json(const std::vector<CheckResult>& checks) {
    auto out = nlohmann::json::array();
    for (const auto& c : checks) {
        out.push_back({{"name", c.name}, {"verdict", to_string(c.verdict)}, {"detail", c.detail}});
    }
    return out;
}

} // namespace

std::string_view to_string(Verdict v) noexcept {
    switch (v) {
    case Verdict::pass:
        return "pass";
    case Verdict::fail:
        return "fail";
    case Verdict::skipped:
        return "skipped";
    }
    return "skipped";
}

Verdict combine(const std::vector<CheckResult>& checks) noexcept {
    Verdict out = Verdict::skipped;
    for (const auto& c : checks) {
        if (c.verdict == Verdict::fail) {
            return Verdict::fail;
        }
        if (c.verdict == Verdict::pass) {
            out = Verdict::pass;
        }
    }
    return out;
}

std::string ValueReport::to_json() const {
    nlohmann::json j;
    j["problem"] = problem;
    j["v0_dp"] = v0_dp ? nlohmann::json(*v0_dp) : nlohmann::json(nullptr);
    auto levels = nlohmann::json::array();
    for (const auto& l : v0_bsde) {
        levels.push_back({{"n", l.n}, {"value", l.value}, {"se", l.standard_error}});
    }
    j["v0_bsde"] = levels;
    j["v0_bsde_limit"] = v0_bsde_limit ? nlohmann::json(*v0_bsde_limit) : nlohmann::json(nullptr);
    if (v0_tilt_best) {
        j["v0_tilt_best"] = {{"mean", v0_tilt_best->mean}, {"se", v0_tilt_best->standard_error}};
    } else {
        j["v0_tilt_best"] = nullptr;
    }
    j["checks"] = checks_json(checks);
    return j.dump(2);
}

std::string RunManifest::to_json() const {
    nlohmann::json j;
    j["command"] = command;
    j["config"] = config_path;
    j["seed"] = seed;
    j["grid_overrides"] = grid_overrides;
    j["output_directory"] = output_directory;
    j["tool_version"] = tool_version;
    j["wall_clock_seconds"] = wall_clock_seconds;
    j["outputs"] = outputs;
    j["verdicts"] = checks_json(verdicts);
    return j.dump(2);
}

} // namespace randctl
