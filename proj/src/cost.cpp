#include "domdec/cost.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace domdec {

namespace {

void check_dims(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.empty()) throw std::invalid_argument("cost: x and y dimensions differ");
}

double smooth_h(double s) { return std::sqrt(1.0 + s * s) - 1.0; }

}  // namespace

CostSpec CostSpec::quadratic() { return CostSpec{}; }

CostSpec CostSpec::smooth_convex() {
    CostSpec c;
    c.kind_ = CostKind::SmoothConvex;
    return c;
}

CostSpec CostSpec::linear() {
    CostSpec c;
    c.kind_ = CostKind::Linear;
    return c;
}

CostSpec CostSpec::callable(Fn f, std::string label) {
    if (!f) throw std::invalid_argument("empty cost callable");
    CostSpec c;
    c.kind_ = CostKind::Callable;
    c.fn_ = std::move(f);
    c.label_ = std::move(label);
    return c;
}

CostSpec CostSpec::with_perturbation(double amplitude) const {
    if (!std::isfinite(amplitude)) throw std::invalid_argument("perturbation amplitude must be finite");
    CostSpec c = *this;
    c.amplitude_ = amplitude;
    return c;
}

std::string CostSpec::name() const {
    switch (kind_) {
        case CostKind::Quadratic: return "quadratic";
        case CostKind::SmoothConvex: return "smooth_convex";
        case CostKind::Linear: return "linear";
        case CostKind::Callable: return label_;
    }
    return "unknown";
}

double CostSpec::base(std::span<const double> x, std::span<const double> y) const {
    check_dims(x, y);
    double s = 0.0;
    switch (kind_) {
        case CostKind::Quadratic:
            for (std::size_t l = 0; l < x.size(); ++l) s += (x[l] - y[l]) * (x[l] - y[l]);
            return s;
        case CostKind::SmoothConvex:
            for (std::size_t l = 0; l < x.size(); ++l) s += smooth_h(x[l] - y[l]);
            return s;
        case CostKind::Linear:
            for (std::size_t l = 0; l < x.size(); ++l) s += x[l] * y[l];
            return s;
        case CostKind::Callable:
            return fn_(x, y);
    }
    return s;
}

double CostSpec::perturbation(int n, std::span<const double> x, std::span<const double>) const {
    if (amplitude_ == 0.0) return 0.0;
    return amplitude_ * std::sin(2.0 * std::numbers::pi * n * x[0]) / std::sqrt(static_cast<double>(n));
}

double CostSpec::perturbation_sup(int n) const { return std::abs(amplitude_) / std::sqrt(static_cast<double>(n)); }

double CostSpec::at_scale(int n, std::span<const double> x, std::span<const double> y) const {
    return base(x, y) + perturbation(n, x, y) / n;
}

std::vector<double> CostSpec::grad_x(std::span<const double> x, std::span<const double> y) const {
    check_dims(x, y);
    std::vector<double> g(x.size());
    switch (kind_) {
        case CostKind::Quadratic:
            for (std::size_t l = 0; l < x.size(); ++l) g[l] = 2.0 * (x[l] - y[l]);
            break;
        case CostKind::SmoothConvex:
            for (std::size_t l = 0; l < x.size(); ++l) {
                const double s = x[l] - y[l];
                g[l] = s / std::sqrt(1.0 + s * s);
            }
            break;
        case CostKind::Linear:
            for (std::size_t l = 0; l < x.size(); ++l) g[l] = y[l];
            break;
        case CostKind::Callable: {
            std::vector<double> xp(x.begin(), x.end()), xm(x.begin(), x.end());
            for (std::size_t l = 0; l < x.size(); ++l) {
                xp[l] = x[l] + kGradientStep;
                xm[l] = x[l] - kGradientStep;
                g[l] = (fn_(xp, y) - fn_(xm, y)) / (2.0 * kGradientStep);
                xp[l] = xm[l] = x[l];
            }
            break;
        }
    }
    return g;
}

bool CostSpec::monotone_in_1d() const {
    return amplitude_ == 0.0 && (kind_ == CostKind::Quadratic || kind_ == CostKind::SmoothConvex);
}

double delta_n(const CostSpec& cost, int n, std::span<const double> xbar, std::span<const double> z,
               std::span<const double> y) {
    if (n <= 0) throw std::invalid_argument("delta_n: n must be positive");
    if (xbar.size() != z.size()) throw std::invalid_argument("delta_n: z dimension mismatch");
    std::vector<double> shifted(xbar.size());
    constexpr double slack = 1e-12;
    for (std::size_t l = 0; l < xbar.size(); ++l) {
        shifted[l] = xbar[l] + z[l] / n;
        if (shifted[l] < -slack || shifted[l] > 1.0 + slack)
            throw std::out_of_range("delta_n: xbar + z/n leaves X");
    }
    const auto g = cost.grad_x(xbar, y);
    double lin = 0.0;
    for (std::size_t l = 0; l < z.size(); ++l) lin += g[l] * z[l] / n;
    return n * (cost.at_scale(n, shifted, y) - cost.base(xbar, y) - lin);
}

double EpsSchedule::at(int n) const {
    if (n <= 0) throw std::invalid_argument("scale must be positive");
    if (!(coefficient >= 0.0) || !std::isfinite(coefficient))
        throw std::invalid_argument("eps coefficient must be finite and nonnegative");
    switch (rule) {
        case EpsRule::Zero: return 0.0;
        case EpsRule::InverseSquare: return coefficient / (static_cast<double>(n) * n);
        case EpsRule::Inverse: return coefficient / n;
        case EpsRule::Constant: return coefficient;
    }
    return 0.0;
}

EtaRegime classify_eta(const EpsSchedule& s) {
    if (s.rule == EpsRule::Zero || s.coefficient == 0.0 || s.rule == EpsRule::InverseSquare)
        return {EtaRegime::Kind::Zero, 0.0};
    if (s.rule == EpsRule::Inverse) return {EtaRegime::Kind::Finite, s.coefficient};
    return {EtaRegime::Kind::Infinite, 0.0};
}

std::string to_string(EpsRule r) {
    switch (r) {
        case EpsRule::Zero: return "zero";
        case EpsRule::InverseSquare: return "inverse_square";
        case EpsRule::Inverse: return "inverse";
        case EpsRule::Constant: return "constant";
    }
    return "zero";
}

EpsRule eps_rule_from_string(const std::string& s) {
    if (s == "zero") return EpsRule::Zero;
    if (s == "inverse_square") return EpsRule::InverseSquare;
    if (s == "inverse") return EpsRule::Inverse;
    if (s == "constant") return EpsRule::Constant;
    throw std::invalid_argument("unknown eps rule '" + s + "'");
}

CostKind cost_kind_from_string(const std::string& s) {
    if (s == "quadratic") return CostKind::Quadratic;
    if (s == "smooth_convex") return CostKind::SmoothConvex;
    if (s == "linear") return CostKind::Linear;
    throw std::invalid_argument("unknown cost kind '" + s + "'");
}

}  // namespace domdec
