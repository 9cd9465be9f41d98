#include "randctl/problem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace randctl {

namespace {

double parameter(const ParameterMap& params, std::string_view key, double fallback) {
    const auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
}

double sum_core(std::span<const double> x, int dim) {
    double s = 0.0;
    for (int i = 0; i < dim; ++i) {
        s += x[static_cast<std::size_t>(i)];
    }
    return s;
}

/// b = 0, sigma = 0, gamma = 0, f = 0, g(x) = w * sum_i x_i.
class UncontrolledDecay final : public CoefficientFamily {
public:
    UncontrolledDecay(const ParameterMap& p, int dim) : dim_(dim), weight_(parameter(p, "g_weight", 1.0)) {}

    FamilyId id() const noexcept override { return FamilyId::uncontrolled_decay; }
    int noise_dim(int) const noexcept override { return 0; }

    void drift(double, std::span<const double>, std::span<const double>, std::span<double> out) const override {
        std::fill(out.begin(), out.end(), 0.0);
    }
    void diffusion(double, std::span<const double>, std::span<const double>, std::span<double> out) const override {
        std::fill(out.begin(), out.end(), 0.0);
    }
    void jump(double, std::span<const double>, std::span<const double>, double, std::span<double> out) const override {
        std::fill(out.begin(), out.end(), 0.0);
    }
    double running_reward(double, std::span<const double>, std::span<const double>) const override { return 0.0; }
    double terminal(std::span<const double> state) const override { return weight_ * sum_core(state, dim_); }

private:
    int dim_;
    double weight_;
};

/// b = a (every coordinate), sigma = s I, gamma = 0, f = 0, g(x) = sum_i x_i.
class BangDrift final : public CoefficientFamily {
public:
    BangDrift(const ParameterMap& p, int dim) : dim_(dim), sigma_(parameter(p, "sigma", 0.2)) {}

    FamilyId id() const noexcept override { return FamilyId::bang_drift; }
    int noise_dim(int dim) const noexcept override { return dim; }

    void drift(double, std::span<const double>, std::span<const double> a, std::span<double> out) const override {
        std::fill(out.begin(), out.end(), a[0]);
    }
    void diffusion(double, std::span<const double>, std::span<const double>, std::span<double> out) const override {
        std::fill(out.begin(), out.end(), 0.0);
        for (int i = 0; i < dim_; ++i) {
            out[static_cast<std::size_t>(i * dim_ + i)] = sigma_;
        }
    }
    void jump(double, std::span<const double>, std::span<const double>, double, std::span<double> out) const override {
        std::fill(out.begin(), out.end(), 0.0);
    }
    double running_reward(double, std::span<const double>, std::span<const double>) const override { return 0.0; }
    double terminal(std::span<const double> state) const override { return sum_core(state, dim_); }

private:
    int dim_;
    double sigma_;
};

/// d = 1: b = 0, sigma = s, gamma = k a z, f = r a, g(x) = -x^2.
class JumpReward final : public CoefficientFamily {
public:
    JumpReward(const ParameterMap& p, int)
        : sigma_(parameter(p, "sigma", 0.0)),
          scale_(parameter(p, "jump_scale", 1.0)),
          reward_(parameter(p, "reward_weight", 1.0)) {}

    FamilyId id() const noexcept override { return FamilyId::jump_reward; }
    int noise_dim(int) const noexcept override { return 1; }

    void drift(double, std::span<const double>, std::span<const double>, std::span<double> out) const override {
        out[0] = 0.0;
    }
    void diffusion(double, std::span<const double>, std::span<const double>, std::span<double> out) const override {
        out[0] = sigma_;
    }
    void jump(double, std::span<const double>, std::span<const double> a, double z, std::span<double> out) const override {
        out[0] = scale_ * a[0] * z;
    }
    double running_reward(double, std::span<const double>, std::span<const double> a) const override {
        return reward_ * a[0];
    }
    double terminal(std::span<const double> state) const override { return -state[0] * state[0]; }

private:
    double sigma_;
    double scale_;
    double reward_;
};

/// Mean-reverting switching: b = a + kappa (m - x), sigma = (s0 + s1 |a|) I,
/// gamma = k z, f = -c a^2, g = -sum (x_i - m)^2.
class OuSwitch final : public CoefficientFamily {
public:
    OuSwitch(const ParameterMap& p, int dim)
        : dim_(dim),
          reversion_(parameter(p, "reversion", 0.5)),
          target_(parameter(p, "target", 1.0)),
          sigma_(parameter(p, "sigma", 0.3)),
          sigma_ctrl_(parameter(p, "sigma_ctrl", 0.2)),
          scale_(parameter(p, "jump_scale", 1.0)),
          cost_(parameter(p, "cost", 0.1)) {}

    FamilyId id() const noexcept override { return FamilyId::ou_switch; }
    int noise_dim(int dim) const noexcept override { return dim; }

    void drift(double, std::span<const double> x, std::span<const double> a, std::span<double> out) const override {
        for (int i = 0; i < dim_; ++i) {
            const auto k = static_cast<std::size_t>(i);
            out[k] = a[0] + reversion_ * (target_ - x[k]);
        }
    }
    void diffusion(double, std::span<const double>, std::span<const double> a, std::span<double> out) const override {
        std::fill(out.begin(), out.end(), 0.0);
        const double s = sigma_ + sigma_ctrl_ * std::abs(a[0]);
        for (int i = 0; i < dim_; ++i) {
            out[static_cast<std::size_t>(i * dim_ + i)] = s;
        }
    }
    void jump(double, std::span<const double>, std::span<const double>, double z, std::span<double> out) const override {
        std::fill(out.begin(), out.end(), scale_ * z);
    }
    double running_reward(double, std::span<const double>, std::span<const double> a) const override {
        return -cost_ * a[0] * a[0];
    }
    double terminal(std::span<const double> state) const override {
        double s = 0.0;
        for (int i = 0; i < dim_; ++i) {
            const double e = state[static_cast<std::size_t>(i)] - target_;
            s += e * e;
        }
        return -s;
    }

private:
    int dim_;
    double reversion_;
    double target_;
    double sigma_;
    double sigma_ctrl_;
    double scale_;
    double cost_;
};

/// d = 1 with one path-functional coordinate y: b = a, sigma = s,
/// gamma = k z, f = -c a^2, g(x, y) = y + w x.
class LookbackIntegral final : public CoefficientFamily {
public:
    LookbackIntegral(const ParameterMap& p, int)
        : sigma_(parameter(p, "sigma", 0.3)),
          cost_(parameter(p, "cost", 0.5)),
          weight_(parameter(p, "terminal_weight", 0.0)),
          scale_(parameter(p, "jump_scale", 1.0)) {}

    FamilyId id() const noexcept override { return FamilyId::lookback_integral; }
    int noise_dim(int) const noexcept override { return 1; }

    void drift(double, std::span<const double>, std::span<const double> a, std::span<double> out) const override {
        out[0] = a[0];
    }
    void diffusion(double, std::span<const double>, std::span<const double>, std::span<double> out) const override {
        out[0] = sigma_;
    }
    void jump(double, std::span<const double>, std::span<const double>, double z, std::span<double> out) const override {
        out[0] = scale_ * z;
    }
    double running_reward(double, std::span<const double>, std::span<const double> a) const override {
        return -cost_ * a[0] * a[0];
    }
    double terminal(std::span<const double> state) const override {
        // The augmented coordinate is appended after x.
        return state[1] + weight_ * state[0];
    }

private:
    double sigma_;
    double cost_;
    double weight_;
    double scale_;
};

std::vector<FamilyInfo> build_registry() {
    return {
        {FamilyId::uncontrolled_decay, "uncontrolled-decay",
         "Pure semigroup flow; no drift, noise, jumps or running reward.",
         "v(t,x) = w * sum_i exp(lambda_i (T-t)) x_i",
         {{"g_weight", 1.0}}},
        {FamilyId::bang_drift, "bang-drift",
         "Control enters the drift linearly; terminal reward sum_i x_i.",
         "v(t,x) = sum_i exp(lambda_i tau) x_i + max(a) sum_i psi_i(tau), psi = (e^{lambda tau}-1)/lambda",
         {{"sigma", 0.2}}},
        {FamilyId::jump_reward, "jump-reward",
         "Control scales compensated jumps and pays a linear running reward; g = -x^2.",
         "v(t,x) = -x^2 + (T-t) (max_a {r a - a^2 k^2 M} - s^2)   (A = 0)",
         {{"sigma", 0.0}, {"jump_scale", 1.0}, {"reward_weight", 1.0}}},
        {FamilyId::ou_switch, "ou-switch",
         "Mean-reverting state with control-dependent drift and volatility, quadratic costs.",
         "",
         {{"reversion", 0.5}, {"target", 1.0}, {"sigma", 0.3}, {"sigma_ctrl", 0.2},
          {"jump_scale", 1.0}, {"cost", 0.1}}},
        {FamilyId::lookback_integral, "lookback-integral",
         "Reward on a path functional carried as an augmented coordinate.",
         "v(t,x,y) = y + x (tau + w) + int_0^tau max_a {a (u + w) - c a^2} du   (running integral, A = 0)",
         {{"sigma", 0.3}, {"cost", 0.5}, {"terminal_weight", 0.0}, {"jump_scale", 1.0}}},
    };
}

bool all_zero(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double e) { return e == 0.0; });
}

// exp(lambda tau) and its integral over [0, tau].
double psi(double lambda, double tau) {
    return lambda == 0.0 ? tau : std::expm1(lambda * tau) / lambda;
}

std::vector<double> first_components(const ControlGrid& control) {
    std::vector<double> out;
    out.reserve(control.size());
    for (const auto& p : control.points) {
        out.push_back(p.front());
    }
    return out;
}

/// Integral over [0, tau] of max_a {a (u + w) - c a^2}; the integrand is the
/// upper envelope of lines in u, integrated exactly piece by piece.
double envelope_integral(const std::vector<double>& controls, double cost, double w, double tau) {
    auto envelope = [&](double u) {
        double best = -std::numeric_limits<double>::infinity();
        for (double a : controls) {
            best = std::max(best, a * (u + w) - cost * a * a);
        }
        return best;
    };
    std::vector<double> cuts{0.0, tau};
    for (std::size_t i = 0; i < controls.size(); ++i) {
        for (std::size_t j = i + 1; j < controls.size(); ++j) {
            if (controls[i] != controls[j]) {
                const double u = cost * (controls[i] + controls[j]) - w;
                if (u > 0.0 && u < tau) {
                    cuts.push_back(u);
                }
            }
        }
    }
    std::sort(cuts.begin(), cuts.end());
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        total += 0.5 * (cuts[i + 1] - cuts[i]) * (envelope(cuts[i]) + envelope(cuts[i + 1]));
    }
    return total;
}

} // namespace

const std::vector<FamilyInfo>& registry() {
    static const std::vector<FamilyInfo> families = build_registry();
    return families;
}

const FamilyInfo& family_info(FamilyId id) {
    for (const auto& info : registry()) {
        if (info.id == id) {
            return info;
        }
    }
    throw Error("family_info: unregistered family");
}

std::shared_ptr<const CoefficientFamily> make_family(FamilyId id, const ParameterMap& parameters, int dim) {
    switch (id) {
    case FamilyId::uncontrolled_decay:
        return std::make_shared<UncontrolledDecay>(parameters, dim);
    case FamilyId::bang_drift:
        return std::make_shared<BangDrift>(parameters, dim);
    case FamilyId::jump_reward:
        return std::make_shared<JumpReward>(parameters, dim);
    case FamilyId::ou_switch:
        return std::make_shared<OuSwitch>(parameters, dim);
    case FamilyId::lookback_integral:
        return std::make_shared<LookbackIntegral>(parameters, dim);
    }
    throw Error("make_family: unknown family");
}

std::optional<AnalyticCandidate> closed_form_value(const ProblemSpec& spec) {
    const auto& params = spec.coefficients.parameters;
    const double horizon = spec.horizon;
    const int dim = spec.dim;
    const int n = spec.state_dim();
    const auto lambdas = spec.a_eigenvalues;

    switch (spec.coefficients.family) {
    case FamilyId::uncontrolled_decay: {
        const double w = parameter(params, "g_weight", 1.0);
        AnalyticCandidate c;
        c.value = [=](double t, std::span<const double> x) {
            double v = 0.0;
            for (int i = 0; i < dim; ++i) {
                v += w * std::exp(lambdas[i] * (horizon - t)) * x[static_cast<std::size_t>(i)];
            }
            return v;
        };
        c.time_derivative = [=](double t, std::span<const double> x) {
            double v = 0.0;
            for (int i = 0; i < dim; ++i) {
                v -= w * lambdas[i] * std::exp(lambdas[i] * (horizon - t)) * x[static_cast<std::size_t>(i)];
            }
            return v;
        };
        c.gradient = [=](double t, std::span<const double>, std::span<double> out) {
            for (int i = 0; i < dim; ++i) {
                out[static_cast<std::size_t>(i)] = w * std::exp(lambdas[i] * (horizon - t));
            }
        };
        c.hessian = [=](double, std::span<const double>, std::span<double> out) {
            std::fill(out.begin(), out.end(), 0.0);
        };
        return c;
    }
    case FamilyId::bang_drift: {
        const auto controls = first_components(spec.control);
        const double a_max = *std::max_element(controls.begin(), controls.end());
        AnalyticCandidate c;
        c.value = [=](double t, std::span<const double> x) {
            const double tau = horizon - t;
            double v = 0.0;
            for (int i = 0; i < dim; ++i) {
                v += std::exp(lambdas[i] * tau) * x[static_cast<std::size_t>(i)] + a_max * psi(lambdas[i], tau);
            }
            return v;
        };
        c.time_derivative = [=](double t, std::span<const double> x) {
            const double tau = horizon - t;
            double v = 0.0;
            for (int i = 0; i < dim; ++i) {
                const double e = std::exp(lambdas[i] * tau);
                v -= lambdas[i] * e * x[static_cast<std::size_t>(i)] + a_max * e;
            }
            return v;
        };
        c.gradient = [=](double t, std::span<const double>, std::span<double> out) {
            for (int i = 0; i < dim; ++i) {
                out[static_cast<std::size_t>(i)] = std::exp(lambdas[i] * (horizon - t));
            }
        };
        c.hessian = [=](double, std::span<const double>, std::span<double> out) {
            std::fill(out.begin(), out.end(), 0.0);
        };
        return c;
    }
    case FamilyId::jump_reward: {
        if (!all_zero(lambdas)) {
            return std::nullopt;
        }
        const double sigma = parameter(params, "sigma", 0.0);
        const double k = parameter(params, "jump_scale", 1.0);
        const double r = parameter(params, "reward_weight", 1.0);
        const double m2 = spec.jump_measure.second_moment;
        double best = -std::numeric_limits<double>::infinity();
        for (double a : first_components(spec.control)) {
            best = std::max(best, r * a - a * a * k * k * m2);
        }
        const double rate = best - sigma * sigma;
        AnalyticCandidate c;
        c.value = [=](double t, std::span<const double> x) { return -x[0] * x[0] + (horizon - t) * rate; };
        c.time_derivative = [=](double, std::span<const double>) { return -rate; };
        c.gradient = [](double, std::span<const double> x, std::span<double> out) { out[0] = -2.0 * x[0]; };
        c.hessian = [](double, std::span<const double>, std::span<double> out) { out[0] = -2.0; };
        return c;
    }
    case FamilyId::lookback_integral: {
        if (spec.augmentation != Augmentation::running_integral || !all_zero(lambdas)) {
            return std::nullopt;
        }
        const double cost = parameter(params, "cost", 0.5);
        const double w = parameter(params, "terminal_weight", 0.0);
        const auto controls = first_components(spec.control);
        auto envelope = [=](double u) {
            double best = -std::numeric_limits<double>::infinity();
            for (double a : controls) {
                best = std::max(best, a * (u + w) - cost * a * a);
            }
            return best;
        };
        AnalyticCandidate c;
        c.value = [=](double t, std::span<const double> x) {
            const double tau = horizon - t;
            return x[1] + x[0] * (tau + w) + envelope_integral(controls, cost, w, tau);
        };
        c.time_derivative = [=](double t, std::span<const double> x) {
            return -(x[0] + envelope(horizon - t));
        };
        c.gradient = [=](double t, std::span<const double>, std::span<double> out) {
            out[0] = horizon - t + w;
            out[1] = 1.0;
        };
        c.hessian = [=](double, std::span<const double>, std::span<double> out) {
            std::fill(out.begin(), out.begin() + n * n, 0.0);
        };
        return c;
    }
    case FamilyId::ou_switch:
        return std::nullopt;
    }
    return std::nullopt;
}

} // namespace randctl
