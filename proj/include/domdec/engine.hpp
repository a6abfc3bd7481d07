#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "domdec/cell_solver.hpp"
#include "domdec/cost.hpp"
#include "domdec/geometry.hpp"
#include "domdec/measure.hpp"

namespace domdec {

inline constexpr double kPruneThreshold = 1e-15;

class CellSolveError : public SolverError {
public:
    CellSolveError(const std::string& what, double achieved, Phase phase, std::size_t cell)
        : SolverError(what, achieved), phase_(phase), cell_(cell) {}
    Phase phase() const { return phase_; }
    std::size_t cell() const { return cell_; }

private:
    Phase phase_;
    std::size_t cell_;
};

class RunState {
public:
    // mu: X atoms with weights; init must be tagged with the basic cell of every X atom.
    RunState(std::shared_ptr<const PartitionLayout> layout, DiscreteMeasure mu, DiscreteMeasure nu, Coupling init,
             CostSpec cost, EpsSchedule schedule, long k = 0);

    const PartitionLayout& layout() const { return *layout_; }
    const std::shared_ptr<const PartitionLayout>& layout_ptr() const { return layout_; }
    const DiscreteMeasure& mu() const { return *mu_; }
    const DiscreteMeasure& nu() const { return *nu_; }
    const Coupling& iterate() const { return iterate_; }
    const CostSpec& cost() const { return *cost_; }
    const EpsSchedule& schedule() const { return schedule_; }
    long k() const { return k_; }
    int n() const { return layout_->n(); }
    int dim() const { return layout_->dim(); }
    double eps() const { return schedule_.at(n()); }

    RunState advanced(Coupling next) const;
    RunState with_iterate(Coupling c, long k) const;

    double transport_cost() const;
    double entropy() const;  // KL(pi | mu x nu)
    double objective() const;
    double x_marginal_error() const;
    double y_marginal_error() const;

    // X atoms of composite cell j, in lexicographic basic-cell order.
    std::vector<std::size_t> composite_atoms(Phase p, std::size_t j) const;

private:
    std::shared_ptr<const PartitionLayout> layout_;
    std::shared_ptr<const DiscreteMeasure> mu_, nu_;
    std::shared_ptr<const CostSpec> cost_;
    EpsSchedule schedule_;
    Coupling iterate_;
    long k_;
};

// The cell problem of composite cell j under the current iterate (Y side restricted to the
// support of nu_J). ys receives the Y indices of the columns.
CellProblem build_cell_problem(const RunState& s, Phase p, std::size_t j, std::vector<std::size_t>& atoms,
                               std::vector<std::uint32_t>& ys);

RunState half_iteration(const RunState& s, Phase p, const SolverOptions& opts = {}, unsigned threads = 1);

struct TrajectorySnapshot {
    long k = 0;
    double t = 0.0;
    Phase phase = Phase::B;
    int n = 0;
    int d = 0;
    std::size_t ny = 0;
    std::vector<double> mass;                  // m_J
    std::vector<std::vector<double>> fiber;    // rho_J over the Y support
    std::vector<std::vector<double>> momentum; // omega_J, component l at [l * ny + y]
    double neighbor_form_gap = 0.0;            // max deviation between the b-form and the neighbor form
};

TrajectorySnapshot snapshot_momentum(const RunState& s);

struct IterationRecord {
    long k = 0;
    double t = 0.0;
    Phase phase = Phase::B;
    double objective = 0.0;
    double transport = 0.0;
    double entropy = 0.0;
    double x_marginal_error = 0.0;
    double y_marginal_error = 0.0;
    double change = 0.0;  // TV to the previous iterate
};

struct EngineConfig {
    double horizon = 1.0;
    SolverOptions solver;
    unsigned threads = 1;
    bool stop_at_fixed_point = true;
    double fixed_point_tol = 1e-12;
    bool keep_iterates = false;
};

long max_iterations(double horizon, int n);

struct RunRecord {
    std::vector<IterationRecord> records;
    std::vector<TrajectorySnapshot> snapshots;
    std::vector<Coupling> iterates;  // filled when keep_iterates
    std::optional<long> fixed_point; // first iterate left unchanged by a full sweep
    long last_k = 0;

    // Snapshot at iteration k; beyond the last iteration of a run stopped at a fixed point the
    // period-two continuation is returned.
    const TrajectorySnapshot& snapshot_at(long k) const;
    const Coupling& iterate_at(long k) const;
};

using Observer = std::function<void(const RunState&, const TrajectorySnapshot&, const IterationRecord&)>;

RunRecord run(const RunState& init, const EngineConfig& cfg, const Observer& observer = {});

}  // namespace domdec
