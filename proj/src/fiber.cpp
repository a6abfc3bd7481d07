#include "domdec/fiber.hpp"

#include <cmath>
#include <stdexcept>

namespace domdec {

std::string to_string(SigmaScheme s) {
    switch (s) {
        case SigmaScheme::DiracCenters: return "dirac";
        case SigmaScheme::Quadrature: return "quadrature";
        case SigmaScheme::Subgrid: return "subgrid";
    }
    return "dirac";
}

SigmaScheme sigma_scheme_from_string(const std::string& s) {
    if (s == "dirac") return SigmaScheme::DiracCenters;
    if (s == "quadrature") return SigmaScheme::Quadrature;
    if (s == "subgrid") return SigmaScheme::Subgrid;
    throw std::invalid_argument("unknown discretization scheme '" + s + "'");
}

std::vector<double> ReferenceCellMeasure::quadrant_masses() const {
    const int d = points.dim();
    std::vector<double> q(std::size_t{1} << d, 0.0);
    for (std::size_t a = 0; a < weights.size(); ++a) {
        // distribute over all sign patterns compatible with the atom; zeros split evenly
        std::vector<std::pair<std::size_t, double>> acc{{0, weights[a]}};
        for (int l = 0; l < d; ++l) {
            const double z = points[a][l];
            std::vector<std::pair<std::size_t, double>> next;
            for (auto [beta, w] : acc) {
                const std::size_t up = (beta << 1) | 1U, down = beta << 1;
                if (z > 0.0)
                    next.emplace_back(up, w);
                else if (z < 0.0)
                    next.emplace_back(down, w);
                else {
                    next.emplace_back(down, w / 2);
                    next.emplace_back(up, w / 2);
                }
            }
            acc = std::move(next);
        }
        for (auto [beta, w] : acc) q[beta] += w;
    }
    return q;
}

ReferenceCellMeasure scale_to_reference(const RunState& s, Phase p, std::size_t j, SigmaScheme scheme) {
    const auto& cell = s.layout().composite(p, j);
    const auto atoms = s.composite_atoms(p, j);
    const int d = s.dim(), n = s.n();
    ReferenceCellMeasure r;
    r.scheme = scheme;
    r.points = PointSet(d, {});
    double m = 0.0;
    for (std::size_t a : atoms) m += s.mu().weight(a);
    std::vector<double> z(d);
    for (std::size_t a : atoms) {
        const auto x = s.mu().points()[a];
        for (int l = 0; l < d; ++l) z[l] = n * (x[l] - cell.center[l]);
        r.points.push_back(z);
        r.weights.push_back(s.mu().weight(a) / m);
    }
    return r;
}

ReferenceCellMeasure limit_sigma(SigmaScheme scheme, int d, int order) {
    ReferenceCellMeasure r;
    r.scheme = scheme;
    r.points = PointSet(d, {});
    const std::size_t quadrants = std::size_t{1} << d;
    const double share = 1.0 / static_cast<double>(quadrants);
    std::vector<double> z(d);
    if (scheme == SigmaScheme::DiracCenters) {
        for (std::size_t beta = 0; beta < quadrants; ++beta) {
            for (int l = 0; l < d; ++l) z[l] = ((beta >> (d - 1 - l)) & 1U) ? 0.5 : -0.5;
            r.points.push_back(z);
            r.weights.push_back(share);
        }
        return r;
    }
    std::vector<double> nodes, w;
    gauss_legendre(order, nodes, w);
    std::size_t per = 1;
    for (int l = 0; l < d; ++l) per *= static_cast<std::size_t>(order);
    for (std::size_t beta = 0; beta < quadrants; ++beta)
        for (std::size_t idx = 0; idx < per; ++idx) {
            std::size_t rem = idx;
            double weight = share;
            for (int l = d - 1; l >= 0; --l) {
                const std::size_t k = rem % static_cast<std::size_t>(order);
                rem /= static_cast<std::size_t>(order);
                const double u = (nodes[k] + 1.0) / 2.0;  // in (0,1)
                z[l] = ((beta >> (d - 1 - l)) & 1U) ? u : -u;
                weight *= w[k] / 2.0;
            }
            r.points.push_back(z);
            r.weights.push_back(weight);
        }
    return r;
}

CellProblem FiberProblem::as_cell_problem() const {
    CellProblem cp;
    cp.rows = rows();
    cp.cols = cols();
    cp.cost = cost;
    cp.mu = z.weights;
    cp.nu = y_weights;
    double ma = 0.0, mb = 0.0;
    for (double v : cp.mu) ma += v;
    for (double v : cp.nu) mb += v;
    for (double& v : cp.nu) v *= ma / mb;
    switch (form) {
        case Form::Linear: cp.eps = 0.0; break;
        case Form::Entropic: cp.eps = weight; break;
        case Form::KlLeading:
            if (!(weight > 0.0)) throw std::logic_error("frozen fiber problem has no cost part to solve");
            cp.eps = 1.0 / weight;
            break;
    }
    return cp;
}

double FiberProblem::evaluate(const Plan& lambda) const {
    CellProblem cp;
    cp.rows = rows();
    cp.cols = cols();
    cp.cost = cost;
    cp.mu = z.weights;
    cp.nu = y_weights;
    const double lin = transport_cost(cp, lambda);
    switch (form) {
        case Form::Linear: return lin;
        case Form::Entropic: return lin + weight * relative_entropy_to_product(cp, lambda);
        case Form::KlLeading: return relative_entropy_to_product(cp, lambda) + weight * lin;
    }
    return lin;
}

namespace {

long iteration_of(double t, int n) {
    const double u = t * n;
    long k = static_cast<long>(std::floor(u + 1e-9));
    return k;
}

}  // namespace

FiberProblem build_discrete_fiber(const RunState& s, double t, std::span<const double> x) {
    const int n = s.n(), d = s.dim();
    const long k = iteration_of(t, n);
    if (k < 1) throw std::out_of_range("fiber problems need t >= 1/n");
    if (k != s.k()) throw std::invalid_argument("state does not hold iteration floor(t n)");
    const Phase p = phase_for_iteration(k);
    const std::size_t j = s.layout().composite_of(x, p);
    const auto& cell = s.layout().composite(p, j);
    const auto atoms = s.composite_atoms(p, j);
    const Coupling& pi = s.iterate();

    FiberProblem fp;
    fp.z = scale_to_reference(s, p, j, SigmaScheme::DiracCenters);
    const auto nu_j = pi.y_marginal_of(atoms);
    double m = 0.0;
    for (double v : nu_j) m += v;
    for (std::size_t y = 0; y < nu_j.size(); ++y)
        if (nu_j[y] > 0.0) {
            fp.ys.push_back(static_cast<std::uint32_t>(y));
            fp.y_weights.push_back(nu_j[y] / m);
        }
    fp.cost.resize(fp.rows() * fp.cols());
    for (std::size_t a = 0; a < fp.rows(); ++a)
        for (std::size_t q = 0; q < fp.cols(); ++q) {
            const auto y = pi.y_points()[fp.ys[q]];
            const auto z = fp.z.points[a];
            const auto g = s.cost().grad_x(cell.center, y);
            double lin = 0.0;
            for (int l = 0; l < d; ++l) lin += g[l] * z[l];
            fp.cost[a * fp.cols() + q] = lin + delta_n(s.cost(), n, cell.center, z, y);
        }
    const double eps = s.eps();
    const EtaRegime eta = classify_eta(s.schedule());
    if (eps == 0.0) {
        fp.form = FiberProblem::Form::Linear;
    } else if (eta.kind == EtaRegime::Kind::Infinite) {
        fp.form = FiberProblem::Form::KlLeading;
        fp.weight = 1.0 / (n * eps);
    } else {
        fp.form = FiberProblem::Form::Entropic;
        fp.weight = n * eps;
    }
    return fp;
}

FiberProblem build_limit_fiber(const ReferenceCellMeasure& sigma, const std::vector<double>& pi_tx,
                               const CostSpec& cost, std::span<const double> x, const PointSet& y_points,
                               EtaRegime eta) {
    if (pi_tx.size() != y_points.size()) throw std::invalid_argument("limit fiber: fiber/support size mismatch");
    FiberProblem fp;
    fp.z = sigma;
    double m = 0.0;
    for (double v : pi_tx) m += v;
    for (std::size_t y = 0; y < pi_tx.size(); ++y)
        if (pi_tx[y] > 0.0) {
            fp.ys.push_back(static_cast<std::uint32_t>(y));
            fp.y_weights.push_back(pi_tx[y] / m);
        }
    const int d = sigma.points.dim();
    fp.cost.resize(fp.rows() * fp.cols());
    for (std::size_t q = 0; q < fp.cols(); ++q) {
        const auto g = cost.grad_x(x, y_points[fp.ys[q]]);
        for (std::size_t a = 0; a < fp.rows(); ++a) {
            double lin = 0.0;
            for (int l = 0; l < d; ++l) lin += g[l] * sigma.points[a][l];
            fp.cost[a * fp.cols() + q] = lin;
        }
    }
    switch (eta.kind) {
        case EtaRegime::Kind::Zero: fp.form = FiberProblem::Form::Linear; break;
        case EtaRegime::Kind::Finite:
            fp.form = FiberProblem::Form::Entropic;
            fp.weight = eta.value;
            break;
        case EtaRegime::Kind::Infinite:
            fp.form = FiberProblem::Form::KlLeading;
            fp.weight = 0.0;
            break;
    }
    return fp;
}

Plan solve_fiber(const FiberProblem& p, const SolverOptions& opts) {
    if (p.form == FiberProblem::Form::KlLeading && p.weight == 0.0) {
        Plan prod(p.rows(), p.cols());
        double mb = 0.0;
        for (double v : p.y_weights) mb += v;
        for (std::size_t a = 0; a < p.rows(); ++a)
            for (std::size_t q = 0; q < p.cols(); ++q) prod(a, q) = p.z.weights[a] * p.y_weights[q] / mb;
        return prod;
    }
    return solve(p.as_cell_problem(), opts);
}

Plan engine_fiber_plan(const RunState& s, const FiberProblem& p, double t, std::span<const double> x) {
    const long k = iteration_of(t, s.n());
    const Phase ph = phase_for_iteration(k);
    const std::size_t j = s.layout().composite_of(x, ph);
    const auto atoms = s.composite_atoms(ph, j);
    if (atoms.size() != p.rows()) throw std::invalid_argument("fiber problem does not match the cell");
    const Coupling& pi = s.iterate();
    double m = 0.0;
    for (std::size_t a : atoms) m += s.mu().weight(a);
    Plan lambda(p.rows(), p.cols());
    for (std::size_t a = 0; a < atoms.size(); ++a) {
        std::size_t q = 0;
        for (const auto& e : pi.row(atoms[a])) {
            while (q < p.cols() && p.ys[q] < e.y) ++q;
            if (q == p.cols() || p.ys[q] != e.y) throw std::logic_error("engine plan leaves the fiber support");
            lambda(a, q) = e.w / m;
        }
    }
    return lambda;
}

std::vector<double> momentum_from_fiber(const Plan& lambda, const ReferenceCellMeasure& z) {
    const int d = z.points.dim();
    std::vector<double> omega(static_cast<std::size_t>(d) * lambda.cols, 0.0);
    for (std::size_t a = 0; a < lambda.rows; ++a)
        for (int l = 0; l < d; ++l) {
            const double zl = z.points[a][l];
            if (zl == 0.0) continue;  // split evenly between both half spaces: no net contribution
            const double sign = zl > 0.0 ? 1.0 : -1.0;
            for (std::size_t q = 0; q < lambda.cols; ++q) omega[l * lambda.cols + q] += sign * lambda(a, q);
        }
    return omega;
}

FiberReport verify_equivalence(const RunState& s, double t, std::span<const double> x, const SolverOptions& opts) {
    FiberReport rep;
    rep.t = t;
    rep.x.assign(x.begin(), x.end());
    rep.n = s.n();
    rep.k = s.k();
    rep.phase = phase_for_iteration(s.k());
    rep.cell = s.layout().composite_of(x, rep.phase);
    rep.eps = s.eps();

    const FiberProblem fp = build_discrete_fiber(s, t, x);
    const Plan engine = engine_fiber_plan(s, fp, t, x);
    const Plan direct = solve_fiber(fp, opts);
    rep.engine_objective = fp.evaluate(engine);
    rep.direct_objective = fp.evaluate(direct);
    rep.objective_gap =
        std::abs(rep.engine_objective - rep.direct_objective) / std::max(1.0, std::abs(rep.direct_objective));
    for (std::size_t e = 0; e < engine.w.size(); ++e) rep.plan_tv += std::abs(engine.w[e] - direct.w[e]);

    const auto recon = momentum_from_fiber(engine, fp.z);
    const auto snap = snapshot_momentum(s);
    const auto& omega = snap.momentum[rep.cell];
    const std::size_t ny = snap.ny, d = static_cast<std::size_t>(s.dim());
    rep.momentum.assign(d * ny, 0.0);
    for (std::size_t l = 0; l < d; ++l)
        for (std::size_t q = 0; q < fp.cols(); ++q) rep.momentum[l * ny + fp.ys[q]] = recon[l * fp.cols() + q];
    for (std::size_t e = 0; e < omega.size(); ++e)
        rep.momentum_gap = std::max(rep.momentum_gap, std::abs(omega[e] - rep.momentum[e]));

    rep.passed = rep.objective_gap <= kObjectiveGapTol && rep.momentum_gap <= kMomentumTol &&
                 (rep.eps == 0.0 || rep.plan_tv <= kPlanTvTol);
    return rep;
}

}  // namespace domdec
