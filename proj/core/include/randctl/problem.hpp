#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace randctl {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A document or ProblemSpec that breaks one of the model invariants.
class ValidationError : public Error {
public:
    ValidationError(std::string field, const std::string& message)
        : Error(field + ": " + message), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Two artifacts that were produced from different problems.
class SpecMismatch : public Error {
public:
    explicit SpecMismatch(const std::string& detail) : Error("spec mismatch: " + detail) {}
};

using ParameterMap = std::map<std::string, double, std::less<>>;

enum class FamilyId { uncontrolled_decay, bang_drift, jump_reward, ou_switch, lookback_integral };
enum class MarkLaw { two_point, uniform_interval, exponential };
enum class Augmentation { none, running_integral, running_supremum };

std::string_view to_string(FamilyId id) noexcept;
std::string_view to_string(MarkLaw law) noexcept;
std::string_view to_string(Augmentation aug) noexcept;
std::optional<FamilyId> parse_family(std::string_view name) noexcept;
std::optional<MarkLaw> parse_mark_law(std::string_view name) noexcept;
std::optional<Augmentation> parse_augmentation(std::string_view name) noexcept;

/// Finite-activity jump measure lambda_pi = total_rate * (mark law).
struct JumpMeasureSpec {
    double total_rate = 0.0;
    MarkLaw mark_law = MarkLaw::two_point;
    ParameterMap mark_parameters;
    double rho_envelope = 1.0;
    /// Integral of z^2 against lambda_pi.
    double second_moment = 0.0;
};

/// Point mass z with probability weight; weights of one rule sum to 1.
struct MarkAtom {
    double z = 0.0;
    double weight = 0.0;
};

/// Quadrature of the mark law: exact atoms for two-point marks,
/// Gauss-Legendre / Gauss-Laguerre with `nodes` points otherwise.
std::vector<MarkAtom> mark_atoms(const JumpMeasureSpec& jumps, int nodes);

/// Mean of z^2 under the mark law in closed form.
double mark_second_moment_exact(const JumpMeasureSpec& jumps);

struct ControlGrid {
    std::vector<std::vector<double>> points;
    std::vector<std::string> labels;

    std::size_t size() const noexcept { return points.size(); }
};

struct RandomizationSpec {
    std::vector<double> lambda0_weights;
    std::size_t a0_index = 0;

    double total_mass() const noexcept;
};

struct InitialLaw {
    enum class Kind { point, gaussian };
    Kind kind = Kind::point;
    std::vector<double> mean;
    std::vector<double> variances;
};

struct RegularityConstants {
    double lipschitz_l = 1.0;
    double growth_pbar = 1.0;
    std::optional<double> moment_cp;
};

/// Coefficient maps of one registry family on the unaugmented state x in R^d.
///
/// Implementations are stateless after construction and safe to share
/// between threads.
class CoefficientFamily {
public:
    virtual ~CoefficientFamily() = default;

    virtual FamilyId id() const noexcept = 0;
    /// Number of driving Brownian coordinates m for state dimension d.
    virtual int noise_dim(int dim) const noexcept = 0;

    virtual void drift(double t, std::span<const double> x, std::span<const double> a,
                       std::span<double> out) const = 0;
    /// Row-major d x m matrix.
    virtual void diffusion(double t, std::span<const double> x, std::span<const double> a,
                           std::span<double> out) const = 0;
    virtual void jump(double t, std::span<const double> x, std::span<const double> a, double z,
                      std::span<double> out) const = 0;
    virtual double running_reward(double t, std::span<const double> x,
                                  std::span<const double> a) const = 0;
    /// Terminal reward on the full (possibly augmented) state.
    virtual double terminal(std::span<const double> state) const = 0;
};

struct CoefficientSet {
    FamilyId family = FamilyId::uncontrolled_decay;
    ParameterMap parameters;
    std::shared_ptr<const CoefficientFamily> impl;
};

/// Fully validated control problem. Immutable once built.
struct ProblemSpec {
    std::string name;
    int dim = 1;
    std::vector<double> a_eigenvalues;
    double horizon = 1.0;
    CoefficientSet coefficients;
    JumpMeasureSpec jump_measure;
    ControlGrid control;
    RandomizationSpec randomization;
    InitialLaw initial_law;
    RegularityConstants regularity;
    Augmentation augmentation = Augmentation::none;

    /// d plus one coordinate when a path functional is tracked.
    int state_dim() const noexcept { return dim + (augmentation == Augmentation::none ? 0 : 1); }
    int noise_dim() const noexcept { return coefficients.impl->noise_dim(dim); }
    std::size_t control_count() const noexcept { return control.size(); }

    /// Spectrum of A on the full state (the augmented coordinate has eigenvalue 0).
    double eigenvalue(int coordinate) const noexcept;

    // Evaluation on the full state. Output spans are sized state_dim()
    // (diffusion: state_dim() x noise_dim(), row-major).
    void drift(double t, std::span<const double> state, std::size_t a, std::span<double> out) const;
    void diffusion(double t, std::span<const double> state, std::size_t a,
                   std::span<double> out) const;
    void jump(double t, std::span<const double> state, std::size_t a, double z,
              std::span<double> out) const;
    double running_reward(double t, std::span<const double> state, std::size_t a) const;
    double terminal(std::span<const double> state) const;

    /// Running-supremum bookkeeping after any change of the first coordinate.
    void update_augmentation(std::span<double> state) const noexcept;

    /// Initial full state for an unaugmented x0.
    std::vector<double> initial_state(std::span<const double> x0) const;
};

/// Coefficient values at one point.
struct CoefficientValues {
    std::vector<double> b;
    std::vector<double> sigma;
    std::optional<std::vector<double>> gamma;
    double f = 0.0;
};

CoefficientValues eval_coefficients(const ProblemSpec& spec, double t, std::span<const double> state,
                                    std::size_t a, std::optional<double> z = std::nullopt);
double eval_terminal(const ProblemSpec& spec, std::span<const double> state);

struct LipschitzReport {
    double max_quotient = 0.0;
    /// Largest observed (|f| + |g|) / (1 + |x|_inf^pbar).
    double max_growth_ratio = 0.0;
    bool pass = false;
    bool growth_pass = false;
    std::size_t samples = 0;
};

/// Samples (t, x, x', a, z) and reports the largest difference quotient of
/// b, sigma and gamma / rho against the declared Lipschitz constant.
LipschitzReport spot_check_lipschitz(const ProblemSpec& spec, std::size_t samples, std::uint64_t seed);

struct LoadOptions {
    /// Samples for the Lipschitz spot check run during loading; 0 disables it.
    std::size_t spot_check_samples = 2000;
    std::uint64_t spot_check_seed = 0;
};

/// Parses and validates a JSON problem document.
ProblemSpec load_problem(std::string_view json_text, const LoadOptions& options = {});
ProblemSpec load_problem_file(const std::string& path, const LoadOptions& options = {});

/// Enforces every structural invariant; throws ValidationError.
void validate(const ProblemSpec& spec);

/// Canonical JSON rendering of the problem (round-trips through load_problem).
std::string to_json(const ProblemSpec& spec);

/// Stable 64-bit fingerprint of the canonical JSON; used to detect mixing artifacts.
std::uint64_t fingerprint(const ProblemSpec& spec);

// ---------------------------------------------------------------------------
// Registry

struct FamilyInfo {
    FamilyId id;
    std::string_view name;
    std::string_view description;
    /// Human-readable closed form, empty when none is known.
    std::string_view closed_form;
    ParameterMap default_parameters;
};

const FamilyInfo& family_info(FamilyId id);
const std::vector<FamilyInfo>& registry();

std::shared_ptr<const CoefficientFamily> make_family(FamilyId id, const ParameterMap& parameters,
                                                     int dim);

/// Smooth candidate value function with exact derivatives.
struct AnalyticCandidate {
    std::function<double(double, std::span<const double>)> value;
    std::function<double(double, std::span<const double>)> time_derivative;
    /// Writes the gradient (state_dim entries).
    std::function<void(double, std::span<const double>, std::span<double>)> gradient;
    /// Writes the row-major Hessian (state_dim^2 entries).
    std::function<void(double, std::span<const double>, std::span<double>)> hessian;
};

/// Registry closed-form value function, when the family has one for these
/// parameters (e.g. A = 0 for jump-reward and lookback-integral).
std::optional<AnalyticCandidate> closed_form_value(const ProblemSpec& spec);

} // namespace randctl
