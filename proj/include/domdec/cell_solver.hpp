#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace domdec {

struct CellProblem {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> cost;  // row-major rows x cols
    std::vector<double> mu;
    std::vector<double> nu;
    double eps = 0.0;
    // Set for 1D costs h(x - y) with h strictly convex: the exact path sorts both sides
    // and returns the north-west-corner plan.
    bool monotone_1d = false;
    std::vector<double> x_coords;
    std::vector<double> y_coords;

    double c(std::size_t i, std::size_t j) const { return cost[i * cols + j]; }
    double mass() const;
    void validate() const;
};

struct Plan {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> w;

    Plan() = default;
    Plan(std::size_t r, std::size_t c) : rows(r), cols(c), w(r * c, 0.0) {}
    double& operator()(std::size_t i, std::size_t j) { return w[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return w[i * cols + j]; }
    std::vector<double> row_sums() const;
    std::vector<double> col_sums() const;
};

struct SolverOptions {
    double tol = 1e-9;
    std::size_t max_iter = 100000;
};

class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, double achieved) : std::runtime_error(what), achieved_(achieved) {}
    double achieved_error() const { return achieved_; }

private:
    double achieved_;
};

// Entropic OT against the reference mu x nu / mass; marginals are exact after a final rounding step.
Plan solve_entropic(const CellProblem& p, const SolverOptions& opts = {});
// Optimal vertex; transportation simplex from the north-west corner with Bland's rule.
Plan solve_exact(const CellProblem& p);
Plan solve(const CellProblem& p, const SolverOptions& opts = {});

double transport_cost(const CellProblem& p, const Plan& plan);
double relative_entropy_to_product(const CellProblem& p, const Plan& plan);
// <C, P> + eps KL(P | mu x nu / mass)
double objective(const CellProblem& p, const Plan& plan);
double marginal_error(const CellProblem& p, const Plan& plan);

}  // namespace domdec
