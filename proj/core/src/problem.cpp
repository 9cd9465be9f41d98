#include "randctl/problem.hpp"

#include "randctl/quadrature.hpp"
#include "randctl/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace randctl {

using nlohmann::json;

namespace {

struct NamedFamily {
    FamilyId id;
    std::string_view name;
};
constexpr NamedFamily kFamilyNames[] = {
    {FamilyId::uncontrolled_decay, "uncontrolled-decay"},
    {FamilyId::bang_drift, "bang-drift"},
    {FamilyId::jump_reward, "jump-reward"},
    {FamilyId::ou_switch, "ou-switch"},
    {FamilyId::lookback_integral, "lookback-integral"},
};

double mark_parameter(const JumpMeasureSpec& jumps, std::string_view key, double fallback) {
    const auto it = jumps.mark_parameters.find(key);
    return it == jumps.mark_parameters.end() ? fallback : it->second;
}

constexpr int kMomentCheckNodes = 32;

} // namespace

std::string_view to_string(FamilyId id) noexcept {
    for (const auto& f : kFamilyNames) {
        if (f.id == id) {
            return f.name;
        }
    }
    return "unknown";
}

std::string_view to_string(MarkLaw law) noexcept {
    switch (law) {
    case MarkLaw::two_point:
        return "two-point";
    case MarkLaw::uniform_interval:
        return "uniform-interval";
    case MarkLaw::exponential:
        return "exponential";
    }
    return "unknown";
}

std::string_view to_string(Augmentation aug) noexcept {
    switch (aug) {
    case Augmentation::none:
        return "none";
    case Augmentation::running_integral:
        return "running-integral";
    case Augmentation::running_supremum:
        return "running-supremum";
    }
    return "unknown";
}

std::optional<FamilyId> parse_family(std::string_view name) noexcept {
    for (const auto& f : kFamilyNames) {
        if (f.name == name) {
            return f.id;
        }
    }
    return std::nullopt;
}

std::optional<MarkLaw> parse_mark_law(std::string_view name) noexcept {
    for (auto law : {MarkLaw::two_point, MarkLaw::uniform_interval, MarkLaw::exponential}) {
        if (to_string(law) == name) {
            return law;
        }
    }
    return std::nullopt;
}

std::optional<Augmentation> parse_augmentation(std::string_view name) noexcept {
    for (auto aug : {Augmentation::none, Augmentation::running_integral, Augmentation::running_supremum}) {
        if (to_string(aug) == name) {
            return aug;
        }
    }
    return std::nullopt;
}

std::vector<MarkAtom> mark_atoms(const JumpMeasureSpec& jumps, int nodes) {
    std::vector<MarkAtom> atoms;
    switch (jumps.mark_law) {
    case MarkLaw::two_point: {
        const double p_hi = mark_parameter(jumps, "p_hi", 0.5);
        atoms.push_back({mark_parameter(jumps, "z_lo", -1.0), 1.0 - p_hi});
        atoms.push_back({mark_parameter(jumps, "z_hi", 1.0), p_hi});
        break;
    }
    case MarkLaw::uniform_interval: {
        const double lo = mark_parameter(jumps, "lo", -1.0);
        const double hi = mark_parameter(jumps, "hi", 1.0);
        const auto rule = gauss_legendre(nodes, lo, hi);
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            atoms.push_back({rule.nodes[i], rule.weights[i] / (hi - lo)});
        }
        break;
    }
    case MarkLaw::exponential: {
        const double rate = mark_parameter(jumps, "rate", 1.0);
        const auto rule = gauss_laguerre(nodes);
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            atoms.push_back({rule.nodes[i] / rate, rule.weights[i]});
        }
        break;
    }
    }
    return atoms;
}

double mark_second_moment_exact(const JumpMeasureSpec& jumps) {
    switch (jumps.mark_law) {
    case MarkLaw::two_point: {
        const double p = mark_parameter(jumps, "p_hi", 0.5);
        const double lo = mark_parameter(jumps, "z_lo", -1.0);
        const double hi = mark_parameter(jumps, "z_hi", 1.0);
        return (1.0 - p) * lo * lo + p * hi * hi;
    }
    case MarkLaw::uniform_interval: {
        const double lo = mark_parameter(jumps, "lo", -1.0);
        const double hi = mark_parameter(jumps, "hi", 1.0);
        return (lo * lo + lo * hi + hi * hi) / 3.0;
    }
    case MarkLaw::exponential: {
        const double rate = mark_parameter(jumps, "rate", 1.0);
        return 2.0 / (rate * rate);
    }
    }
    return 0.0;
}

double RandomizationSpec::total_mass() const noexcept {
    double s = 0.0;
    for (double w : lambda0_weights) {
        s += w;
    }
    return s;
}

double ProblemSpec::eigenvalue(int coordinate) const noexcept {
    return coordinate < dim ? a_eigenvalues[static_cast<std::size_t>(coordinate)] : 0.0;
}

void ProblemSpec::drift(double t, std::span<const double> state, std::size_t a, std::span<double> out) const {
    const auto d = static_cast<std::size_t>(dim);
    coefficients.impl->drift(t, state.first(d), control.points[a], out.first(d));
    if (augmentation == Augmentation::running_integral) {
        out[d] = state[0];
    } else if (augmentation == Augmentation::running_supremum) {
        out[d] = 0.0;
    }
}

void ProblemSpec::diffusion(double t, std::span<const double> state, std::size_t a, std::span<double> out) const {
    const auto d = static_cast<std::size_t>(dim);
    const auto m = static_cast<std::size_t>(noise_dim());
    if (augmentation == Augmentation::none) {
        coefficients.impl->diffusion(t, state.first(d), control.points[a], out.first(d * m));
        return;
    }
    // Core block occupies the first d rows; the augmented row carries no noise.
    coefficients.impl->diffusion(t, state.first(d), control.points[a], out.first(d * m));
    std::fill(out.begin() + static_cast<std::ptrdiff_t>(d * m),
              out.begin() + static_cast<std::ptrdiff_t>((d + 1) * m), 0.0);
}

void ProblemSpec::jump(double t, std::span<const double> state, std::size_t a, double z, std::span<double> out) const {
    const auto d = static_cast<std::size_t>(dim);
    coefficients.impl->jump(t, state.first(d), control.points[a], z, out.first(d));
    if (augmentation != Augmentation::none) {
        out[d] = 0.0;
    }
}

double ProblemSpec::running_reward(double t, std::span<const double> state, std::size_t a) const {
    return coefficients.impl->running_reward(t, state.first(static_cast<std::size_t>(dim)), control.points[a]);
}

double ProblemSpec::terminal(std::span<const double> state) const {
    return coefficients.impl->terminal(state);
}

void ProblemSpec::update_augmentation(std::span<double> state) const noexcept {
    if (augmentation == Augmentation::running_supremum) {
        const auto d = static_cast<std::size_t>(dim);
        state[d] = std::max(state[d], state[0]);
    }
}

std::vector<double> ProblemSpec::initial_state(std::span<const double> x0) const {
    std::vector<double> state(x0.begin(), x0.begin() + dim);
    if (augmentation == Augmentation::running_integral) {
        state.push_back(0.0);
    } else if (augmentation == Augmentation::running_supremum) {
        state.push_back(x0[0]);
    }
    return state;
}

CoefficientValues eval_coefficients(const ProblemSpec& spec, double t, std::span<const double> state,
                                    std::size_t a, std::optional<double> z) {
    if (a >= spec.control_count()) {
        throw std::out_of_range("eval_coefficients: control index out of range");
    }
    if (!(t >= 0.0 && t <= spec.horizon)) {
        throw std::out_of_range("eval_coefficients: time outside [0, T]");
    }
    const auto n = static_cast<std::size_t>(spec.state_dim());
    const auto m = static_cast<std::size_t>(spec.noise_dim());
    CoefficientValues values;
    values.b.resize(n);
    values.sigma.resize(n * m);
    spec.drift(t, state, a, values.b);
    spec.diffusion(t, state, a, values.sigma);
    if (z) {
        values.gamma.emplace(n);
        spec.jump(t, state, a, *z, *values.gamma);
    }
    values.f = spec.running_reward(t, state, a);
    return values;
}

double eval_terminal(const ProblemSpec& spec, std::span<const double> state) {
    return spec.terminal(state);
}

LipschitzReport spot_check_lipschitz(const ProblemSpec& spec, std::size_t samples, std::uint64_t seed) {
    const auto n = static_cast<std::size_t>(spec.state_dim());
    const auto m = static_cast<std::size_t>(spec.noise_dim());
    const auto atoms = mark_atoms(spec.jump_measure, 8);
    double radius = 1.0;
    for (double v : spec.initial_law.mean) {
        radius = std::max(radius, 1.0 + std::abs(v));
    }
    radius *= 10.0;

    CounterRng rng({seed, 0, Stream::spot_check});
    std::vector<double> x(n), y(n), bx(n), by(n), sx(n * m), sy(n * m), gx(n), gy(n);
    LipschitzReport report;
    report.samples = samples;
    const double rho = spec.jump_measure.rho_envelope;

    for (std::size_t s = 0; s < samples; ++s) {
        const double t = spec.horizon * rng.uniform();
        const auto a = std::min(static_cast<std::size_t>(rng.uniform() * static_cast<double>(spec.control_count())),
                                spec.control_count() - 1);
        // Alternate far pairs and close pairs so both global and local slopes are probed.
        const double spread = (s % 2 == 0) ? radius : 1e-3 * radius;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = radius * (2.0 * rng.uniform() - 1.0);
            y[i] = x[i] + spread * (2.0 * rng.uniform() - 1.0);
        }
        spec.update_augmentation(x);
        spec.update_augmentation(y);
        double dist2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            dist2 += (x[i] - y[i]) * (x[i] - y[i]);
        }
        const double dist = std::sqrt(dist2);
        if (dist == 0.0) {
            continue;
        }

        spec.drift(t, x, a, bx);
        spec.drift(t, y, a, by);
        spec.diffusion(t, x, a, sx);
        spec.diffusion(t, y, a, sy);
        double db = 0.0;
        double ds = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            db += (bx[i] - by[i]) * (bx[i] - by[i]);
        }
        for (std::size_t i = 0; i < n * m; ++i) {
            ds += (sx[i] - sy[i]) * (sx[i] - sy[i]);
        }
        double q = std::max(std::sqrt(db), std::sqrt(ds)) / dist;

        if (spec.jump_measure.total_rate > 0.0) {
            const auto& atom = atoms[std::min(static_cast<std::size_t>(rng.uniform() * static_cast<double>(atoms.size())),
                                              atoms.size() - 1)];
            spec.jump(t, x, a, atom.z, gx);
            spec.jump(t, y, a, atom.z, gy);
            double dg = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                dg += (gx[i] - gy[i]) * (gx[i] - gy[i]);
            }
            if (dg > 0.0) {
                q = std::max(q, rho > 0.0 ? std::sqrt(dg) / (rho * dist) : std::numeric_limits<double>::infinity());
            }
        }
        report.max_quotient = std::max(report.max_quotient, q);

        double sup_norm = 0.0;
        for (double v : x) {
            sup_norm = std::max(sup_norm, std::abs(v));
        }
        const double growth = (std::abs(spec.running_reward(t, x, a)) + std::abs(spec.terminal(x))) /
                              (1.0 + std::pow(sup_norm, spec.regularity.growth_pbar));
        report.max_growth_ratio = std::max(report.max_growth_ratio, growth);
    }
    const double limit = 1.05 * spec.regularity.lipschitz_l;
    report.pass = report.max_quotient <= limit;
    report.growth_pass = report.max_growth_ratio <= limit;
    return report;
}

void validate(const ProblemSpec& spec) {
    if (spec.dim < 1) {
        throw ValidationError("dim", "must be >= 1");
    }
    if (spec.a_eigenvalues.size() != static_cast<std::size_t>(spec.dim)) {
        throw ValidationError("a_eigenvalues", "length must equal dim");
    }
    for (double e : spec.a_eigenvalues) {
        if (!std::isfinite(e) || e > 0.0) {
            throw ValidationError("a_eigenvalues", "spectrum not dissipative (eigenvalues must be <= 0)");
        }
    }
    if (!(spec.horizon > 0.0) || !std::isfinite(spec.horizon)) {
        throw ValidationError("horizon", "must be positive and finite");
    }
    if (!spec.coefficients.impl || spec.coefficients.impl->id() != spec.coefficients.family) {
        throw ValidationError("family", "coefficient family not instantiated");
    }
    const FamilyId family = spec.coefficients.family;
    if ((family == FamilyId::jump_reward || family == FamilyId::lookback_integral) && spec.dim != 1) {
        throw ValidationError("dim", std::string(to_string(family)) + " requires dim = 1");
    }
    if (family == FamilyId::lookback_integral && spec.augmentation == Augmentation::none) {
        throw ValidationError("augmentation", "lookback-integral needs a path functional");
    }
    if (family != FamilyId::lookback_integral && spec.augmentation != Augmentation::none) {
        throw ValidationError("augmentation", "only lookback-integral tracks a path functional");
    }
    for (const auto& [key, value] : spec.coefficients.parameters) {
        if (!std::isfinite(value)) {
            throw ValidationError("parameters." + key, "must be finite");
        }
    }

    const auto& jm = spec.jump_measure;
    if (!(jm.total_rate >= 0.0) || !std::isfinite(jm.total_rate)) {
        throw ValidationError("jump_measure.total_rate", "must be >= 0");
    }
    if (!(jm.rho_envelope >= 0.0)) {
        throw ValidationError("jump_measure.rho_envelope", "must be >= 0");
    }
    switch (jm.mark_law) {
    case MarkLaw::two_point: {
        const double p = mark_parameter(jm, "p_hi", 0.5);
        if (!(p >= 0.0 && p <= 1.0)) {
            throw ValidationError("jump_measure.mark_parameters.p_hi", "must lie in [0, 1]");
        }
        break;
    }
    case MarkLaw::uniform_interval:
        if (!(mark_parameter(jm, "lo", -1.0) < mark_parameter(jm, "hi", 1.0))) {
            throw ValidationError("jump_measure.mark_parameters", "uniform interval needs lo < hi");
        }
        break;
    case MarkLaw::exponential:
        if (!(mark_parameter(jm, "rate", 1.0) > 0.0)) {
            throw ValidationError("jump_measure.mark_parameters.rate", "must be > 0");
        }
        break;
    }
    if (!(jm.second_moment >= 0.0)) {
        throw ValidationError("jump_measure.second_moment", "must be >= 0");
    }
    double quadrature_moment = 0.0;
    for (const auto& atom : mark_atoms(jm, kMomentCheckNodes)) {
        quadrature_moment += atom.weight * atom.z * atom.z;
    }
    quadrature_moment *= jm.total_rate;
    if (std::abs(quadrature_moment - jm.second_moment) > 1e-8 * std::max(1.0, jm.second_moment)) {
        throw ValidationError("jump_measure.second_moment",
                              "inconsistent with mark law x total_rate (quadrature gives " +
                                  std::to_string(quadrature_moment) + ")");
    }

    const auto& ctrl = spec.control;
    if (ctrl.points.empty()) {
        throw ValidationError("control.points", "must be nonempty");
    }
    for (std::size_t i = 0; i < ctrl.points.size(); ++i) {
        if (ctrl.points[i].empty() || ctrl.points[i].size() != ctrl.points[0].size()) {
            throw ValidationError("control.points", "all points must share one nonzero dimension");
        }
        for (double v : ctrl.points[i]) {
            if (!std::isfinite(v)) {
                throw ValidationError("control.points", "must be finite");
            }
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (ctrl.points[i] == ctrl.points[j]) {
                throw ValidationError("control.points", "points must be pairwise distinct");
            }
        }
    }
    if (!ctrl.labels.empty() && ctrl.labels.size() != ctrl.points.size()) {
        throw ValidationError("control.labels", "one label per control point");
    }

    const auto& rnd = spec.randomization;
    if (rnd.lambda0_weights.size() != ctrl.points.size()) {
        throw ValidationError("randomization.lambda0_weights", "one weight per control point");
    }
    for (double w : rnd.lambda0_weights) {
        if (!(w > 0.0) || !std::isfinite(w)) {
            throw ValidationError("randomization.lambda0_weights", "λ0 lacks full support (weights must be > 0)");
        }
    }
    if (rnd.a0_index >= ctrl.points.size()) {
        throw ValidationError("randomization.a0_index", "not a valid control index");
    }

    const auto& law = spec.initial_law;
    if (law.mean.size() != static_cast<std::size_t>(spec.dim)) {
        throw ValidationError("initial_law", "mean / x0 must have dim entries");
    }
    for (double v : law.mean) {
        if (!std::isfinite(v)) {
            throw ValidationError("initial_law", "must be finite");
        }
    }
    if (law.kind == InitialLaw::Kind::gaussian) {
        if (law.variances.size() != law.mean.size()) {
            throw ValidationError("initial_law.variances", "must have dim entries");
        }
        for (double v : law.variances) {
            if (!(v >= 0.0) || !std::isfinite(v)) {
                throw ValidationError("initial_law.variances", "must be >= 0");
            }
        }
    }

    if (!(spec.regularity.lipschitz_l >= 0.0)) {
        throw ValidationError("regularity.lipschitz_l", "must be >= 0");
    }
    if (!(spec.regularity.growth_pbar >= 0.0)) {
        throw ValidationError("regularity.growth_pbar", "must be >= 0");
    }
}

namespace {

std::vector<double> number_array(const json& node, const std::string& field) {
    if (!node.is_array()) {
        throw ValidationError(field, "expected an array of numbers");
    }
    std::vector<double> out;
    for (const auto& v : node) {
        if (!v.is_number()) {
            throw ValidationError(field, "expected an array of numbers");
        }
        out.push_back(v.get<double>());
    }
    return out;
}

ParameterMap number_map(const json& node, const std::string& field) {
    ParameterMap out;
    if (node.is_null()) {
        return out;
    }
    if (!node.is_object()) {
        throw ValidationError(field, "expected an object of numbers");
    }
    for (const auto& [key, value] : node.items()) {
        if (!value.is_number()) {
            throw ValidationError(field + "." + key, "expected a number");
        }
        out[key] = value.get<double>();
    }
    return out;
}

const json& required(const json& doc, const char* key) {
    const auto it = doc.find(key);
    if (it == doc.end()) {
        throw ValidationError(key, "missing required field");
    }
    return *it;
}

double number(const json& node, const std::string& field) {
    if (!node.is_number()) {
        throw ValidationError(field, "expected a number");
    }
    return node.get<double>();
}

ProblemSpec parse_problem(const json& doc) {
    if (!doc.is_object()) {
        throw ValidationError("document", "top level must be a JSON object");
    }
    const auto& version = required(doc, "schema_version");
    if (!version.is_number_integer() || version.get<int>() != 1) {
        throw ValidationError("schema_version", "unsupported schema version (expected 1)");
    }

    ProblemSpec spec;
    spec.name = doc.value("name", std::string{});
    const auto& family_node = required(doc, "family");
    if (!family_node.is_string()) {
        throw ValidationError("family", "expected a string");
    }
    const auto family = parse_family(family_node.get<std::string>());
    if (!family) {
        throw ValidationError("family", "unknown family '" + family_node.get<std::string>() + "'");
    }
    if (spec.name.empty()) {
        spec.name = std::string(to_string(*family));
    }
    const auto& dim_node = required(doc, "dim");
    if (!dim_node.is_number_integer() || dim_node.get<long long>() < 1 || dim_node.get<long long>() > 8) {
        throw ValidationError("dim", "expected an integer in [1, 8]");
    }
    spec.dim = dim_node.get<int>();
    spec.a_eigenvalues = number_array(required(doc, "a_eigenvalues"), "a_eigenvalues");
    spec.horizon = number(required(doc, "horizon"), "horizon");

    spec.augmentation = Augmentation::none;
    if (const auto it = doc.find("augmentation"); it != doc.end()) {
        const auto aug = it->is_string() ? parse_augmentation(it->get<std::string>()) : std::nullopt;
        if (!aug) {
            throw ValidationError("augmentation", "expected none | running-integral | running-supremum");
        }
        spec.augmentation = *aug;
    }

    spec.coefficients.family = *family;
    spec.coefficients.parameters = family_info(*family).default_parameters;
    for (const auto& [key, value] : number_map(doc.value("parameters", json()), "parameters")) {
        if (!spec.coefficients.parameters.contains(key)) {
            throw ValidationError("parameters." + key, "not a parameter of " + std::string(to_string(*family)));
        }
        spec.coefficients.parameters[key] = value;
    }
    spec.coefficients.impl = make_family(*family, spec.coefficients.parameters, spec.dim);

    if (const auto it = doc.find("jump_measure"); it != doc.end() && !it->is_null()) {
        const json& jm = *it;
        if (!jm.is_object()) {
            throw ValidationError("jump_measure", "expected an object");
        }
        spec.jump_measure.total_rate = number(jm.value("total_rate", json(0.0)), "jump_measure.total_rate");
        const auto law_name = jm.value("mark_law", std::string("two-point"));
        const auto law = parse_mark_law(law_name);
        if (!law) {
            throw ValidationError("jump_measure.mark_law", "unknown mark law '" + law_name + "'");
        }
        spec.jump_measure.mark_law = *law;
        spec.jump_measure.mark_parameters = number_map(jm.value("mark_parameters", json()), "jump_measure.mark_parameters");
        spec.jump_measure.rho_envelope = number(jm.value("rho_envelope", json(1.0)), "jump_measure.rho_envelope");
        if (jm.contains("second_moment")) {
            spec.jump_measure.second_moment = number(jm["second_moment"], "jump_measure.second_moment");
        } else {
            spec.jump_measure.second_moment = spec.jump_measure.total_rate * mark_second_moment_exact(spec.jump_measure);
        }
    }

    const json& control = required(doc, "control");
    for (const auto& p : required(control, "points")) {
        if (p.is_number()) {
            spec.control.points.push_back({p.get<double>()});
        } else {
            spec.control.points.push_back(number_array(p, "control.points"));
        }
    }
    if (const auto it = control.find("labels"); it != control.end()) {
        for (const auto& l : *it) {
            spec.control.labels.push_back(l.is_string() ? l.get<std::string>() : l.dump());
        }
    }

    if (const auto it = doc.find("randomization"); it != doc.end()) {
        spec.randomization.lambda0_weights = number_array(required(*it, "lambda0_weights"), "randomization.lambda0_weights");
        const auto& a0 = required(*it, "a0_index");
        if (!a0.is_number_integer() || a0.get<long long>() < 0) {
            throw ValidationError("randomization.a0_index", "expected a nonnegative integer");
        }
        spec.randomization.a0_index = a0.get<std::size_t>();
    } else {
        spec.randomization.lambda0_weights.assign(spec.control.points.size(), 1.0);
        spec.randomization.a0_index = 0;
    }

    const json& law = required(doc, "initial_law");
    const auto kind = law.value("kind", std::string("point"));
    if (kind == "point") {
        spec.initial_law.kind = InitialLaw::Kind::point;
        spec.initial_law.mean = number_array(required(law, "x0"), "initial_law.x0");
    } else if (kind == "gaussian") {
        spec.initial_law.kind = InitialLaw::Kind::gaussian;
        spec.initial_law.mean = number_array(required(law, "mean"), "initial_law.mean");
        spec.initial_law.variances = number_array(required(law, "variances"), "initial_law.variances");
    } else {
        throw ValidationError("initial_law.kind", "expected point | gaussian");
    }

    if (const auto it = doc.find("regularity"); it != doc.end()) {
        spec.regularity.lipschitz_l = number(required(*it, "lipschitz_l"), "regularity.lipschitz_l");
        spec.regularity.growth_pbar = number(required(*it, "growth_pbar"), "regularity.growth_pbar");
        if (it->contains("moment_cp")) {
            spec.regularity.moment_cp = number((*it)["moment_cp"], "regularity.moment_cp");
        }
    }
    return spec;
}

json problem_json(const ProblemSpec& spec) {
    json doc;
    doc["schema_version"] = 1;
    doc["name"] = spec.name;
    doc["family"] = std::string(to_string(spec.coefficients.family));
    doc["dim"] = spec.dim;
    doc["a_eigenvalues"] = spec.a_eigenvalues;
    doc["horizon"] = spec.horizon;
    doc["augmentation"] = std::string(to_string(spec.augmentation));
    json params = json::object();
    for (const auto& [k, v] : spec.coefficients.parameters) {
        params[k] = v;
    }
    doc["parameters"] = params;
    json marks = json::object();
    for (const auto& [k, v] : spec.jump_measure.mark_parameters) {
        marks[k] = v;
    }
    doc["jump_measure"] = {{"total_rate", spec.jump_measure.total_rate},
                           {"mark_law", std::string(to_string(spec.jump_measure.mark_law))},
                           {"mark_parameters", marks},
                           {"rho_envelope", spec.jump_measure.rho_envelope},
                           {"second_moment", spec.jump_measure.second_moment}};
    doc["control"] = {{"points", spec.control.points}, {"labels", spec.control.labels}};
    doc["randomization"] = {{"lambda0_weights", spec.randomization.lambda0_weights},
                            {"a0_index", spec.randomization.a0_index}};
    if (spec.initial_law.kind == InitialLaw::Kind::point) {
        doc["initial_law"] = {{"kind", "point"}, {"x0", spec.initial_law.mean}};
    } else {
        doc["initial_law"] = {{"kind", "gaussian"},
                              {"mean", spec.initial_law.mean},
                              {"variances", spec.initial_law.variances}};
    }
    doc["regularity"] = {{"lipschitz_l", spec.regularity.lipschitz_l},
                         {"growth_pbar", spec.regularity.growth_pbar}};
    if (spec.regularity.moment_cp) {
        doc["regularity"]["moment_cp"] = *spec.regularity.moment_cp;
    }
    return doc;
}

} // namespace

ProblemSpec load_problem(std::string_view json_text, const LoadOptions& options) {
    json doc;
    try {
        doc = json::parse(json_text.begin(), json_text.end());
    } catch (const json::parse_error& e) {
        throw ValidationError("document", std::string("malformed JSON: ") + e.what());
    }
    ProblemSpec spec;
    try {
        spec = parse_problem(doc);
    } catch (const json::exception& e) {
        throw ValidationError("document", std::string("malformed document: ") + e.what());
    }
    validate(spec);
    if (options.spot_check_samples > 0) {
        const auto report = spot_check_lipschitz(spec, options.spot_check_samples, options.spot_check_seed);
        if (!report.pass) {
            throw ValidationError("regularity.lipschitz_l",
                                  "declared L = " + std::to_string(spec.regularity.lipschitz_l) +
                                      " but sampled difference quotient reached " +
                                      std::to_string(report.max_quotient));
        }
        if (!report.growth_pass) {
            throw ValidationError("regularity.lipschitz_l",
                                  "polynomial growth bound L (1 + |x|^pbar) violated; sampled ratio " +
                                      std::to_string(report.max_growth_ratio));
        }
    }
    return spec;
}

ProblemSpec load_problem_file(const std::string& path, const LoadOptions& options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("config", "cannot open '" + path + "'");
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return load_problem(buffer.str(), options);
}

std::string to_json(const ProblemSpec& spec) { return problem_json(spec).dump(2); }

std::uint64_t fingerprint(const ProblemSpec& spec) {
    const std::string text = problem_json(spec).dump();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace randctl
