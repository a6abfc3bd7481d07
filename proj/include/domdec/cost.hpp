#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace domdec {

enum class CostKind {
    Quadratic,     // |x - y|^2
    SmoothConvex,  // sum_l h(x_l - y_l), h(s) = sqrt(1 + s^2) - 1
    Linear,        // <x, y>
    Callable       // user supplied, gradient by central differences
};

class CostSpec {
public:
    using Fn = std::function<double(std::span<const double>, std::span<const double>)>;

    static CostSpec quadratic();
    static CostSpec smooth_convex();
    static CostSpec linear();
    static CostSpec callable(Fn f, std::string label = "callable");

    // f^n(x,y) = amplitude * sin(2 pi n x_0) / sqrt(n); sup |f^n| = amplitude / sqrt(n) -> 0.
    CostSpec with_perturbation(double amplitude) const;

    CostKind kind() const { return kind_; }
    double perturbation_amplitude() const { return amplitude_; }
    std::string name() const;

    double base(std::span<const double> x, std::span<const double> y) const;
    double perturbation(int n, std::span<const double> x, std::span<const double> y) const;
    double perturbation_sup(int n) const;
    // c^n = c + f^n / n
    double at_scale(int n, std::span<const double> x, std::span<const double> y) const;
    std::vector<double> grad_x(std::span<const double> x, std::span<const double> y) const;

    // Cost of the form h(x - y) with h strictly convex on R, d = 1, no perturbation.
    bool monotone_in_1d() const;

private:
    CostKind kind_ = CostKind::Quadratic;
    double amplitude_ = 0.0;
    Fn fn_;
    std::string label_;
};

inline constexpr double kGradientStep = 1e-6;

// n [c^n(xbar + z/n, y) - c(xbar, y) - <grad_x c(xbar, y), z/n>]
double delta_n(const CostSpec& cost, int n, std::span<const double> xbar, std::span<const double> z,
               std::span<const double> y);

enum class EpsRule { Zero, InverseSquare, Inverse, Constant };

struct EtaRegime {
    enum class Kind { Zero, Finite, Infinite };
    Kind kind = Kind::Zero;
    double value = 0.0;  // meaningful for Finite
};

struct EpsSchedule {
    EpsRule rule = EpsRule::Zero;
    double coefficient = 0.0;

    double at(int n) const;
};

EtaRegime classify_eta(const EpsSchedule& s);
std::string to_string(EpsRule r);
EpsRule eps_rule_from_string(const std::string& s);
CostKind cost_kind_from_string(const std::string& s);

}  // namespace domdec
