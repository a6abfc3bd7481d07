#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "domdec/cell_solver.hpp"
#include "domdec/cost.hpp"
#include "domdec/engine.hpp"
#include "domdec/measure.hpp"

namespace domdec {

enum class SigmaScheme { DiracCenters, Quadrature, Subgrid };

std::string to_string(SigmaScheme s);
SigmaScheme sigma_scheme_from_string(const std::string& s);

// Probability measure on the reference cell Z = [-1,1]^d.
struct ReferenceCellMeasure {
    SigmaScheme scheme = SigmaScheme::DiracCenters;
    PointSet points;
    std::vector<double> weights;

    // sigma(Z_b) per sign pattern b (lexicographic, -1 before +1); atoms on {z_l = 0} split evenly.
    std::vector<double> quadrant_masses() const;
};

ReferenceCellMeasure scale_to_reference(const RunState& s, Phase p, std::size_t j, SigmaScheme scheme);
// The n -> infinity limit of the scheme for uniform mu: 2^-d sum_b delta_{b/2}, or 2^-d Lebesgue on Z
// discretized by Gauss-Legendre of the given order per axis and quadrant.
ReferenceCellMeasure limit_sigma(SigmaScheme scheme, int d, int order = 4);

struct FiberProblem {
    enum class Form {
        Linear,     // <L, lambda>
        Entropic,   // <L, lambda> + weight KL(lambda | sigma x pi)
        KlLeading   // KL(lambda | sigma x pi) + weight <L, lambda>; weight = 0 is the frozen limit
    };

    ReferenceCellMeasure z;
    std::vector<double> y_weights;     // pi_{t,x} restricted to its support
    std::vector<std::uint32_t> ys;     // Y support indices of the columns
    std::vector<double> cost;          // |z| x |ys|
    Form form = Form::Linear;
    double weight = 0.0;

    std::size_t rows() const { return z.weights.size(); }
    std::size_t cols() const { return ys.size(); }
    // Cell problem with the same minimizers.
    CellProblem as_cell_problem() const;
    double evaluate(const Plan& lambda) const;
};

// Discrete fiber problem F^n_{t,x} at the iteration k = floor(t n) held by s.
FiberProblem build_discrete_fiber(const RunState& s, double t, std::span<const double> x);
// Limit problem F_{t,x} with cost <grad_x c(x, y), z> and the eta regime of the schedule.
FiberProblem build_limit_fiber(const ReferenceCellMeasure& sigma, const std::vector<double>& pi_tx,
                               const CostSpec& cost, std::span<const double> x, const PointSet& y_points,
                               EtaRegime eta);

Plan solve_fiber(const FiberProblem& p, const SolverOptions& opts = {});

// (S_J, id)_# pi_J / m_J for the composite cell of (t, x), columns as in the fiber problem.
Plan engine_fiber_plan(const RunState& s, const FiberProblem& p, double t, std::span<const double> x);

// omega_l = P_Y(lambda on z_l > 0) - P_Y(lambda on z_l < 0), component l at [l * cols + q].
std::vector<double> momentum_from_fiber(const Plan& lambda, const ReferenceCellMeasure& z);

struct FiberReport {
    double t = 0.0;
    std::vector<double> x;
    int n = 0;
    long k = 0;
    Phase phase = Phase::A;
    std::size_t cell = 0;
    double eps = 0.0;
    double engine_objective = 0.0;
    double direct_objective = 0.0;
    double objective_gap = 0.0;  // |a - b| / max(1, |b|)
    double plan_tv = 0.0;
    double momentum_gap = 0.0;   // max |cell momentum - reconstruction from the fiber plan|
    std::vector<double> momentum;  // reconstruction, dense over Y, component-major
    bool passed = false;
};

inline constexpr double kObjectiveGapTol = 1e-8;
inline constexpr double kPlanTvTol = 1e-6;
inline constexpr double kMomentumTol = 1e-12;

FiberReport verify_equivalence(const RunState& s, double t, std::span<const double> x, const SolverOptions& opts = {});

}  // namespace domdec
