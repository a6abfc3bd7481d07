#include "domdec/engine.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "domdec/parallel.hpp"

namespace domdec {

namespace {

constexpr double kMarginalSlack = 1e-9;

double l1_gap(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s;
}

}  // namespace

RunState::RunState(std::shared_ptr<const PartitionLayout> layout, DiscreteMeasure mu, DiscreteMeasure nu,
                   Coupling init, CostSpec cost, EpsSchedule schedule, long k)
    : layout_(std::move(layout)),
      mu_(std::make_shared<const DiscreteMeasure>(std::move(mu))),
      nu_(std::make_shared<const DiscreteMeasure>(std::move(nu))),
      cost_(std::make_shared<const CostSpec>(std::move(cost))),
      schedule_(schedule),
      iterate_(std::move(init)),
      k_(k) {
    if (!layout_) throw std::invalid_argument("run state without layout");
    if (mu_->dim() != layout_->dim()) throw std::invalid_argument("X atoms do not match the layout dimension");
    if (iterate_.rows() != mu_->size()) throw std::invalid_argument("initial plan rows differ from X atoms");
    if (iterate_.cols() != nu_->size()) throw std::invalid_argument("initial plan columns differ from Y support");
    if (!iterate_.has_cells() || iterate_.cell_count() != layout_->basic_count())
        throw std::invalid_argument("initial plan must tag every X atom with its basic cell");
    for (std::size_t c = 0; c < layout_->basic_count(); ++c)
        if (iterate_.atoms_in_cell(c).empty())
            throw std::invalid_argument("basic cell " + std::to_string(c) + " carries no X atom");
    for (double w : mu_->weights())
        if (!(w > 0.0)) throw std::invalid_argument("X atoms must carry positive mass");
    if (std::abs(mu_->total_mass() - nu_->total_mass()) > kMarginalSlack)
        throw std::invalid_argument("mu and nu carry different masses");
    if (x_marginal_error() > kMarginalSlack || y_marginal_error() > kMarginalSlack)
        throw std::invalid_argument("initial plan is not a coupling of mu and nu");
    (void)schedule_.at(layout_->n());
}

RunState RunState::advanced(Coupling next) const { return with_iterate(std::move(next), k_ + 1); }

RunState RunState::with_iterate(Coupling c, long k) const {
    RunState s = *this;
    s.iterate_ = std::move(c);
    s.k_ = k;
    return s;
}

double RunState::transport_cost() const {
    const int n = layout_->n();
    double s = 0.0;
    for (std::size_t i = 0; i < iterate_.rows(); ++i)
        for (const auto& e : iterate_.row(i))
            s += e.w * cost_->at_scale(n, iterate_.x_points()[i], iterate_.y_points()[e.y]);
    return s;
}

double RunState::entropy() const { return kl_to_product(iterate_, mu_->weights(), nu_->weights()); }

double RunState::objective() const {
    const double e = eps();
    return e > 0.0 ? transport_cost() + e * entropy() : transport_cost();
}

double RunState::x_marginal_error() const { return l1_gap(iterate_.x_marginal(), mu_->weights()); }

double RunState::y_marginal_error() const { return l1_gap(iterate_.y_marginal(), nu_->weights()); }

std::vector<std::size_t> RunState::composite_atoms(Phase p, std::size_t j) const {
    std::vector<std::size_t> atoms;
    for (std::size_t b : layout_->composite(p, j).basic) {
        const auto& a = iterate_.atoms_in_cell(b);
        atoms.insert(atoms.end(), a.begin(), a.end());
    }
    return atoms;
}

CellProblem build_cell_problem(const RunState& s, Phase p, std::size_t j, std::vector<std::size_t>& atoms,
                               std::vector<std::uint32_t>& ys) {
    const Coupling& pi = s.iterate();
    atoms = s.composite_atoms(p, j);
    const auto nu_j = pi.y_marginal_of(atoms);
    ys.clear();
    for (std::size_t y = 0; y < nu_j.size(); ++y)
        if (nu_j[y] > 0.0) ys.push_back(static_cast<std::uint32_t>(y));

    CellProblem cp;
    cp.rows = atoms.size();
    cp.cols = ys.size();
    cp.eps = s.eps();
    cp.mu.resize(cp.rows);
    cp.nu.resize(cp.cols);
    cp.cost.resize(cp.rows * cp.cols);
    const int n = s.n();
    for (std::size_t a = 0; a < cp.rows; ++a) {
        cp.mu[a] = pi.row_mass(atoms[a]);
        for (std::size_t q = 0; q < cp.cols; ++q)
            cp.cost[a * cp.cols + q] = s.cost().at_scale(n, pi.x_points()[atoms[a]], pi.y_points()[ys[q]]);
    }
    // the row sums and nu_J agree up to summation order; rescale nu_J onto the row mass
    double mrow = 0.0, mcol = 0.0;
    for (double v : cp.mu) mrow += v;
    for (std::size_t q = 0; q < cp.cols; ++q) mcol += nu_j[ys[q]];
    for (std::size_t q = 0; q < cp.cols; ++q) cp.nu[q] = nu_j[ys[q]] * (mrow / mcol);
    if (s.dim() == 1 && s.cost().monotone_in_1d()) {
        cp.monotone_1d = true;
        cp.x_coords.resize(cp.rows);
        cp.y_coords.resize(cp.cols);
        for (std::size_t a = 0; a < cp.rows; ++a) cp.x_coords[a] = pi.x_points()[atoms[a]][0];
        for (std::size_t q = 0; q < cp.cols; ++q) cp.y_coords[q] = pi.y_points()[ys[q]][0];
    }
    return cp;
}

RunState half_iteration(const RunState& s, Phase p, const SolverOptions& opts, unsigned threads) {
    const auto& cells = s.layout().composites(p);
    struct CellResult {
        std::vector<std::size_t> atoms;
        std::vector<SparseRow> rows;
    };
    std::vector<CellResult> results(cells.size());

    parallel_for(cells.size(), threads, [&](std::size_t j) {
        std::vector<std::uint32_t> ys;
        CellResult& out = results[j];
        CellProblem cp = build_cell_problem(s, p, j, out.atoms, ys);
        Plan plan;
        try {
            plan = solve(cp, opts);
        } catch (const SolverError& e) {
            std::ostringstream msg;
            msg << "cell " << j << " of partition " << to_string(p) << ": " << e.what()
                << " (achieved marginal error " << e.achieved_error() << ")";
            throw CellSolveError(msg.str(), e.achieved_error(), p, j);
        }
        out.rows.resize(cp.rows);
        for (std::size_t a = 0; a < cp.rows; ++a) {
            SparseRow& r = out.rows[a];
            double kept = 0.0;
            for (std::size_t q = 0; q < cp.cols; ++q) {
                const double w = plan(a, q);
                if (w >= kPruneThreshold) {
                    r.push_back({ys[q], w});
                    kept += w;
                }
            }
            const double target = s.mu().weight(out.atoms[a]);
            if (kept > 0.0)
                for (auto& e : r) e.w *= target / kept;
        }
    });

    Coupling next = s.iterate();
    for (auto& res : results)
        for (std::size_t a = 0; a < res.atoms.size(); ++a) next.set_row(res.atoms[a], std::move(res.rows[a]));
    return s.advanced(std::move(next));
}

TrajectorySnapshot snapshot_momentum(const RunState& s) {
    const PartitionLayout& layout = s.layout();
    const Phase p = phase_for_iteration(s.k());
    const auto& cells = layout.composites(p);
    const Coupling& pi = s.iterate();
    const int d = layout.dim();
    const double n = layout.n();

    TrajectorySnapshot snap;
    snap.k = s.k();
    snap.n = layout.n();
    snap.t = static_cast<double>(s.k()) / layout.n();
    snap.phase = p;
    snap.d = d;
    snap.ny = pi.cols();
    snap.mass.resize(cells.size());
    snap.fiber.resize(cells.size());
    snap.momentum.resize(cells.size());

    const std::size_t ny = snap.ny;
    for (std::size_t j = 0; j < cells.size(); ++j) {
        const CompositeCell& c = cells[j];
        std::vector<std::vector<double>> basic(c.basic.size());
        std::vector<double> nu_j(ny, 0.0);
        for (std::size_t q = 0; q < c.basic.size(); ++q) {
            const std::size_t one[] = {c.basic[q]};
            basic[q] = dense_y_on_basics(pi, one);
            for (std::size_t y = 0; y < ny; ++y) nu_j[y] += basic[q][y];
        }
        double m = 0.0;
        for (std::size_t q = 0; q < c.basic.size(); ++q)
            for (std::size_t a : pi.atoms_in_cell(c.basic[q])) m += s.mu().weight(a);
        snap.mass[j] = m;
        for (double& v : nu_j) v /= m;
        snap.fiber[j] = std::move(nu_j);

        auto local = [&](std::size_t basic_index) {
            for (std::size_t q = 0; q < c.basic.size(); ++q)
                if (c.basic[q] == basic_index) return q;
            throw std::logic_error("offset cell outside its composite");
        };

        std::vector<double> omega(static_cast<std::size_t>(d) * ny, 0.0);
        for (std::size_t beta = 0; beta < layout.sign_count(); ++beta) {
            if (c.offset[beta] == kNoCell) continue;
            const auto b = layout.sign_vector(beta);
            const auto& nu_i = basic[local(static_cast<std::size_t>(c.offset[beta]))];
            for (int l = 0; l < d; ++l)
                for (std::size_t y = 0; y < ny; ++y) omega[l * ny + y] += b[l] * nu_i[y] / m;
        }

        std::vector<double> alt(static_cast<std::size_t>(d) * ny, 0.0);
        for (std::size_t q = 0; q < c.neighbors.size(); ++q) {
            const CompositeCell& nb = layout.composite(other(p), c.neighbors[q]);
            const auto& nu_i = basic[local(c.shared[q])];
            for (int l = 0; l < d; ++l) {
                const double shift = (nb.center[l] - c.center[l]) * n;
                for (std::size_t y = 0; y < ny; ++y) alt[l * ny + y] += nu_i[y] * shift / m;
            }
        }
        for (std::size_t e = 0; e < omega.size(); ++e)
            snap.neighbor_form_gap = std::max(snap.neighbor_form_gap, std::abs(omega[e] - alt[e]));
        snap.momentum[j] = std::move(omega);
    }
    return snap;
}

long max_iterations(double horizon, int n) {
    if (!(horizon >= 0.0)) throw std::invalid_argument("horizon must be nonnegative");
    return static_cast<long>(std::ceil(horizon * n - 1e-9));
}

const TrajectorySnapshot& RunRecord::snapshot_at(long k) const {
    if (k < 0) throw std::out_of_range("negative iteration");
    if (k <= last_k) return snapshots.at(static_cast<std::size_t>(k));
    if (!fixed_point) throw std::out_of_range("iteration beyond the recorded run");
    const long q = ((k - last_k) % 2 == 0) ? last_k : last_k - 1;
    return snapshots.at(static_cast<std::size_t>(q));
}

const Coupling& RunRecord::iterate_at(long k) const {
    if (iterates.empty()) throw std::logic_error("run did not keep its iterates");
    if (k < 0) throw std::out_of_range("negative iteration");
    if (k <= last_k) return iterates.at(static_cast<std::size_t>(k));
    if (!fixed_point) throw std::out_of_range("iteration beyond the recorded run");
    const long q = ((k - last_k) % 2 == 0) ? last_k : last_k - 1;
    return iterates.at(static_cast<std::size_t>(q));
}

RunRecord run(const RunState& init, const EngineConfig& cfg, const Observer& observer) {
    RunRecord rec;
    const long kmax = max_iterations(cfg.horizon, init.n());
    RunState state = init;
    std::optional<Coupling> prev, prev2;

    auto record = [&](double change) {
        IterationRecord r;
        r.k = state.k();
        r.t = static_cast<double>(state.k()) / state.n();
        r.phase = phase_for_iteration(state.k());
        r.transport = state.transport_cost();
        r.entropy = state.eps() > 0.0 ? state.entropy() : 0.0;
        r.objective = state.eps() > 0.0 ? r.transport + state.eps() * r.entropy : r.transport;
        r.x_marginal_error = state.x_marginal_error();
        r.y_marginal_error = state.y_marginal_error();
        r.change = change;
        rec.records.push_back(r);
        rec.snapshots.push_back(snapshot_momentum(state));
        if (cfg.keep_iterates) rec.iterates.push_back(state.iterate());
        if (observer) observer(state, rec.snapshots.back(), r);
    };

    record(0.0);
    rec.last_k = state.k();
    while (state.k() - init.k() < kmax) {
        prev2 = std::move(prev);
        prev = state.iterate();
        state = half_iteration(state, phase_for_iteration(state.k() + 1), cfg.solver, cfg.threads);
        record(tv_distance(state.iterate(), *prev));
        rec.last_k = state.k();
        if (prev2 && phase_for_iteration(state.k()) == Phase::B &&
            tv_distance(state.iterate(), *prev2) < cfg.fixed_point_tol) {
            if (!rec.fixed_point) rec.fixed_point = state.k() - 2;
            if (cfg.stop_at_fixed_point) break;
        }
    }
    return rec;
}

}  // namespace domdec
