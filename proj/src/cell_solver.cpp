#include "domdec/cell_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

namespace domdec {

namespace {

struct Compressed {
    std::vector<std::size_t> r, c;  // original indices with positive mass
};

Compressed compress(const CellProblem& p) {
    Compressed out;
    for (std::size_t i = 0; i < p.rows; ++i)
        if (p.mu[i] > 0.0) out.r.push_back(i);
    for (std::size_t j = 0; j < p.cols; ++j)
        if (p.nu[j] > 0.0) out.c.push_back(j);
    return out;
}

// Scale rows and columns down to their targets, then distribute the deficits as a rank-one term.
void round_to_marginals(std::vector<double>& P, std::size_t m, std::size_t k, const std::vector<double>& a,
                        const std::vector<double>& b) {
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += P[i * k + j];
        if (s > a[i])
            for (std::size_t j = 0; j < k; ++j) P[i * k + j] *= a[i] / s;
    }
    std::vector<double> col(k, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) col[j] += P[i * k + j];
    for (std::size_t j = 0; j < k; ++j)
        if (col[j] > b[j])
            for (std::size_t i = 0; i < m; ++i) P[i * k + j] *= b[j] / col[j];
    std::vector<double> er(m), ec(k, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += P[i * k + j];
        er[i] = std::max(0.0, a[i] - s);
        total += er[i];
    }
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) ec[j] += P[i * k + j];
    for (std::size_t j = 0; j < k; ++j) ec[j] = std::max(0.0, b[j] - ec[j]);
    if (total <= 0.0) return;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) P[i * k + j] += er[i] * ec[j] / total;
}

double log_sum_exp(const double* v, std::size_t n) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, v[i]);
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - mx);
    return mx + std::log(s);
}

Plan expand(const CellProblem& p, const Compressed& cp, const std::vector<double>& P) {
    Plan out(p.rows, p.cols);
    const std::size_t k = cp.c.size();
    for (std::size_t i = 0; i < cp.r.size(); ++i)
        for (std::size_t j = 0; j < k; ++j) out(cp.r[i], cp.c[j]) = P[i * k + j];
    return out;
}

// North-west corner on the given row/column orders; returns m + k - 1 basic cells.
std::vector<std::pair<std::size_t, std::size_t>> north_west(const std::vector<double>& a,
                                                            const std::vector<double>& b,
                                                            const std::vector<std::size_t>& ro,
                                                            const std::vector<std::size_t>& co,
                                                            std::vector<double>& flow, std::size_t k) {
    std::vector<std::pair<std::size_t, std::size_t>> basis;
    std::vector<double> ra(a), rb(b);
    std::size_t p = 0, q = 0;
    const std::size_t m = ro.size(), n = co.size();
    while (true) {
        const std::size_t i = ro[p], j = co[q];
        basis.emplace_back(i, j);
        if (p == m - 1 && q == n - 1) {
            flow[i * k + j] = std::max(0.0, std::min(ra[i], rb[j]));
            break;
        }
        if (q == n - 1 || (p < m - 1 && ra[i] <= rb[j])) {
            const double x = std::min(ra[i], rb[j]);
            flow[i * k + j] = x;
            rb[j] -= x;
            ra[i] = 0.0;
            ++p;
        } else {
            const double x = rb[j];
            flow[i * k + j] = x;
            ra[i] -= x;
            rb[j] = 0.0;
            ++q;
        }
    }
    return basis;
}

std::vector<double> transportation_simplex(const std::vector<double>& C, const std::vector<double>& a,
                                           const std::vector<double>& b) {
    const std::size_t m = a.size(), k = b.size();
    std::vector<double> flow(m * k, 0.0);
    std::vector<char> basic(m * k, 0);
    std::vector<std::size_t> ro(m), co(k);
    std::iota(ro.begin(), ro.end(), 0);
    std::iota(co.begin(), co.end(), 0);
    for (auto [i, j] : north_west(a, b, ro, co, flow, k)) basic[i * k + j] = 1;
    if (m == 1 || k == 1) return flow;

    double cmax = 0.0;
    for (double v : C) cmax = std::max(cmax, std::abs(v));
    const double tol = 1e-12 * (1.0 + cmax);
    const std::size_t nodes = m + k;
    std::vector<double> pot(nodes);
    std::vector<char> seen(nodes);
    std::vector<long> parent(nodes);
    std::vector<std::size_t> queue;
    std::vector<std::vector<std::size_t>> adj(nodes);
    const std::size_t max_pivots = 100 * (m * k + nodes) + 1000;

    for (std::size_t pivot = 0; pivot < max_pivots; ++pivot) {
        for (auto& l : adj) l.clear();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < k; ++j)
                if (basic[i * k + j]) {
                    adj[i].push_back(m + j);
                    adj[m + j].push_back(i);
                }
        // potentials u_i + v_j = c_ij on the basis tree, u_0 = 0
        std::fill(seen.begin(), seen.end(), 0);
        queue.assign(1, 0);
        pot[0] = 0.0;
        seen[0] = 1;
        for (std::size_t h = 0; h < queue.size(); ++h) {
            const std::size_t u = queue[h];
            for (std::size_t v : adj[u]) {
                if (seen[v]) continue;
                seen[v] = 1;
                const std::size_t i = u < m ? u : v, j = (u < m ? v : u) - m;
                pot[v] = C[i * k + j] - pot[u];
                queue.push_back(v);
            }
        }
        std::size_t enter = m * k;
        for (std::size_t e = 0; e < m * k && enter == m * k; ++e) {
            if (basic[e]) continue;
            const std::size_t i = e / k, j = e % k;
            if (C[e] - pot[i] - pot[m + j] < -tol) enter = e;
        }
        if (enter == m * k) return flow;

        const std::size_t ei = enter / k, ej = enter % k;
        std::fill(seen.begin(), seen.end(), 0);
        std::fill(parent.begin(), parent.end(), -1);
        queue.assign(1, ei);
        seen[ei] = 1;
        for (std::size_t h = 0; h < queue.size() && !seen[m + ej]; ++h) {
            const std::size_t u = queue[h];
            for (std::size_t v : adj[u]) {
                if (seen[v]) continue;
                seen[v] = 1;
                parent[v] = static_cast<long>(u);
                queue.push_back(v);
            }
        }
        // walk from column ej back to row ei; edges alternate -, +, -, ...
        std::vector<std::size_t> minus, plus;
        std::size_t node = m + ej;
        bool sign_minus = true;
        while (node != ei) {
            const std::size_t prev = static_cast<std::size_t>(parent[node]);
            const std::size_t i = node < m ? node : prev, j = (node < m ? prev : node) - m;
            (sign_minus ? minus : plus).push_back(i * k + j);
            sign_minus = !sign_minus;
            node = prev;
        }
        double theta = std::numeric_limits<double>::infinity();
        std::size_t leave = m * k;
        for (std::size_t e : minus)
            if (flow[e] < theta || (flow[e] == theta && e < leave)) {
                theta = flow[e];
                leave = e;
            }
        for (std::size_t e : plus) flow[e] += theta;
        for (std::size_t e : minus) flow[e] = std::max(0.0, flow[e] - theta);
        flow[enter] = theta;
        flow[leave] = 0.0;
        basic[enter] = 1;
        basic[leave] = 0;
    }
    throw SolverError("transportation simplex exceeded its pivot budget", 0.0);
}

// Damped Newton ascent on the dual with g[k-1] pinned; used once Sinkhorn has slowed down.
// Returns the final row marginal L1 error.
double newton_polish(const std::vector<double>& C, const std::vector<double>& a, const std::vector<double>& b,
                     double eps, std::vector<double>& f, std::vector<double>& g, double tol, int max_steps) {
    const std::size_t m = a.size(), k = b.size(), dim = m + k - 1;
    const double mass = std::accumulate(a.begin(), a.end(), 0.0);
    std::vector<double> ref(m * k);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) ref[i * k + j] = a[i] * b[j] / mass;
    std::vector<double> P(m * k);
    auto eval = [&](const std::vector<double>& ff, const std::vector<double>& gg) {
        double obj = 0.0;
        for (std::size_t i = 0; i < m; ++i) obj += a[i] * ff[i];
        for (std::size_t j = 0; j < k; ++j) obj += b[j] * gg[j];
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < k; ++j) {
                P[i * k + j] = ref[i * k + j] * std::exp((ff[i] + gg[j] - C[i * k + j]) / eps);
                obj -= eps * P[i * k + j];
            }
        return obj;
    };
    auto errors = [&](Eigen::VectorXd& grad) {
        grad.setZero(static_cast<Eigen::Index>(dim));
        double err = 0.0;
        std::vector<double> col(k, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            double r = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                r += P[i * k + j];
                col[j] += P[i * k + j];
            }
            grad[static_cast<Eigen::Index>(i)] = a[i] - r;
            err += std::abs(a[i] - r);
        }
        double cerr = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (j + 1 < k) grad[static_cast<Eigen::Index>(m + j)] = b[j] - col[j];
            cerr += std::abs(b[j] - col[j]);
        }
        return std::max(err, cerr);
    };
    double obj = eval(f, g);
    Eigen::VectorXd grad;
    double err = errors(grad);
    for (int step = 0; step < max_steps && err > tol; ++step) {
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < k; ++j) {
                const double v = P[i * k + j] / eps;
                const auto ii = static_cast<Eigen::Index>(i);
                H(ii, ii) += v;
                if (j + 1 < k) {
                    const auto jj = static_cast<Eigen::Index>(m + j);
                    H(jj, jj) += v;
                    H(ii, jj) += v;
                    H(jj, ii) += v;
                }
            }
        const Eigen::VectorXd dir = H.ldlt().solve(grad);
        if (!dir.allFinite()) break;
        double t = 1.0;
        bool moved = false;
        std::vector<double> nf(m), ng(g);
        for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
            for (std::size_t i = 0; i < m; ++i) nf[i] = f[i] + t * dir[static_cast<Eigen::Index>(i)];
            for (std::size_t j = 0; j + 1 < k; ++j) ng[j] = g[j] + t * dir[static_cast<Eigen::Index>(m + j)];
            const double nobj = eval(nf, ng);
            if (std::isfinite(nobj) && nobj >= obj + 1e-4 * t * grad.dot(dir)) {
                f = nf;
                g = ng;
                obj = nobj;
                moved = true;
                break;
            }
        }
        if (!moved) {
            eval(f, g);
            break;
        }
        err = errors(grad);
    }
    return err;
}

}  // namespace

double CellProblem::mass() const {
    double s = 0.0;
    for (double v : mu) s += v;
    return s;
}

void CellProblem::validate() const {
    if (rows == 0 || cols == 0) throw std::invalid_argument("cell problem with empty side");
    if (mu.size() != rows || nu.size() != cols || cost.size() != rows * cols)
        throw std::invalid_argument("cell problem shape mismatch");
    if (!(eps >= 0.0) || !std::isfinite(eps)) throw std::invalid_argument("eps must be finite and nonnegative");
    double sa = 0.0, sb = 0.0;
    for (double v : mu) {
        if (!(v >= 0.0)) throw std::invalid_argument("negative mass in cell problem");
        sa += v;
    }
    for (double v : nu) {
        if (!(v >= 0.0)) throw std::invalid_argument("negative mass in cell problem");
        sb += v;
    }
    if (!(sa > 0.0)) throw std::invalid_argument("cell problem with zero mass");
    if (std::abs(sa - sb) > 1e-12 * std::max(1.0, sa))
        throw std::invalid_argument("cell problem marginals carry different masses");
    for (double v : cost)
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite cost entry");
    if (monotone_1d && (x_coords.size() != rows || y_coords.size() != cols))
        throw std::invalid_argument("monotone path needs coordinates for every atom");
}

std::vector<double> Plan::row_sums() const {
    std::vector<double> s(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) s[i] += (*this)(i, j);
    return s;
}

std::vector<double> Plan::col_sums() const {
    std::vector<double> s(cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) s[j] += (*this)(i, j);
    return s;
}

Plan solve_entropic(const CellProblem& p, const SolverOptions& opts) {
    p.validate();
    if (!(p.eps > 0.0)) throw std::invalid_argument("entropic solve needs eps > 0");
    const Compressed cp = compress(p);
    const std::size_t m = cp.r.size(), k = cp.c.size();
    std::vector<double> a(m), b(k), C(m * k);
    for (std::size_t i = 0; i < m; ++i) a[i] = p.mu[cp.r[i]];
    for (std::size_t j = 0; j < k; ++j) b[j] = p.nu[cp.c[j]];
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) C[i * k + j] = p.c(cp.r[i], cp.c[j]);
    const double mass = std::accumulate(a.begin(), a.end(), 0.0);

    std::vector<double> P(m * k);
    if (m == 1 || k == 1) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < k; ++j) P[i * k + j] = a[i] * b[j] / mass;
        round_to_marginals(P, m, k, a, b);
        return expand(p, cp, P);
    }

    std::vector<double> la(m), lb(k), f(m, 0.0), g(k, 0.0), buf(std::max(m, k));
    for (std::size_t i = 0; i < m; ++i) la[i] = std::log(a[i]);
    for (std::size_t j = 0; j < k; ++j) lb[j] = std::log(b[j]);
    const double lm = std::log(mass);
    const auto [cmin, cmax] = std::minmax_element(C.begin(), C.end());
    const double range = *cmax - *cmin;

    auto sweep = [&](double e) {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < k; ++j) buf[j] = lb[j] + (g[j] - C[i * k + j]) / e;
            f[i] = e * (lm - log_sum_exp(buf.data(), k));
        }
        for (std::size_t j = 0; j < k; ++j) {
            for (std::size_t i = 0; i < m; ++i) buf[i] = la[i] + (f[i] - C[i * k + j]) / e;
            g[j] = e * (lm - log_sum_exp(buf.data(), m));
        }
        double err = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < k; ++j)
                s += std::exp(la[i] + lb[j] - lm + (f[i] + g[j] - C[i * k + j]) / e);
            err += std::abs(s - a[i]);
        }
        return err;
    };

    // eps-scaling warm start; only the final stage at p.eps determines the result
    double e = std::max(p.eps, range);
    while (e > p.eps) {
        for (std::size_t it = 0; it < 200; ++it)
            if (sweep(e) <= std::max(opts.tol, 1e-6 * mass)) break;
        e = std::max(p.eps, e * 0.5);
    }
    double err = std::numeric_limits<double>::infinity();
    constexpr std::size_t kPolishAfter = 2000;
    for (std::size_t it = 0; it < opts.max_iter; ++it) {
        err = sweep(p.eps);
        if (err <= opts.tol) break;
        if (it + 1 == kPolishAfter) {
            // Sinkhorn is linearly convergent with a rate that degrades as eps -> 0
            err = newton_polish(C, a, b, p.eps, f, g, opts.tol, 50);
            if (err <= opts.tol) break;
        }
    }
    if (!(err <= opts.tol))
        throw SolverError("Sinkhorn did not reach the marginal tolerance", err);

    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j)
            P[i * k + j] = std::exp(la[i] + lb[j] - lm + (f[i] + g[j] - C[i * k + j]) / p.eps);
    round_to_marginals(P, m, k, a, b);
    return expand(p, cp, P);
}

Plan solve_exact(const CellProblem& p) {
    p.validate();
    const Compressed cp = compress(p);
    const std::size_t m = cp.r.size(), k = cp.c.size();
    std::vector<double> a(m), b(k);
    for (std::size_t i = 0; i < m; ++i) a[i] = p.mu[cp.r[i]];
    for (std::size_t j = 0; j < k; ++j) b[j] = p.nu[cp.c[j]];

    if (p.monotone_1d) {
        std::vector<std::size_t> ro(m), co(k);
        std::iota(ro.begin(), ro.end(), 0);
        std::iota(co.begin(), co.end(), 0);
        std::stable_sort(ro.begin(), ro.end(),
                         [&](std::size_t u, std::size_t v) { return p.x_coords[cp.r[u]] < p.x_coords[cp.r[v]]; });
        std::stable_sort(co.begin(), co.end(),
                         [&](std::size_t u, std::size_t v) { return p.y_coords[cp.c[u]] < p.y_coords[cp.c[v]]; });
        std::vector<double> flow(m * k, 0.0);
        north_west(a, b, ro, co, flow, k);
        return expand(p, cp, flow);
    }

    std::vector<double> C(m * k);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) C[i * k + j] = p.c(cp.r[i], cp.c[j]);
    return expand(p, cp, transportation_simplex(C, a, b));
}

Plan solve(const CellProblem& p, const SolverOptions& opts) {
    if (p.eps < 0.0) throw std::invalid_argument("eps must be nonnegative");
    return p.eps == 0.0 ? solve_exact(p) : solve_entropic(p, opts);
}

double transport_cost(const CellProblem& p, const Plan& plan) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.rows; ++i)
        for (std::size_t j = 0; j < p.cols; ++j) s += p.c(i, j) * plan(i, j);
    return s;
}

double relative_entropy_to_product(const CellProblem& p, const Plan& plan) {
    const double mass = p.mass();
    double s = 0.0;
    for (std::size_t i = 0; i < p.rows; ++i)
        for (std::size_t j = 0; j < p.cols; ++j) {
            const double r = p.mu[i] * p.nu[j] / mass;
            const double w = plan(i, j);
            if (r > 0.0)
                s += w > 0.0 ? w * std::log(w / r) - w + r : r;
            else if (w > 0.0)
                return std::numeric_limits<double>::infinity();
        }
    return s;
}

double objective(const CellProblem& p, const Plan& plan) {
    const double c = transport_cost(p, plan);
    return p.eps > 0.0 ? c + p.eps * relative_entropy_to_product(p, plan) : c;
}

double marginal_error(const CellProblem& p, const Plan& plan) {
    const auto r = plan.row_sums();
    const auto c = plan.col_sums();
    double e = 0.0;
    for (std::size_t i = 0; i < p.rows; ++i) e += std::abs(r[i] - p.mu[i]);
    for (std::size_t j = 0; j < p.cols; ++j) e += std::abs(c[j] - p.nu[j]);
    return e;
}

}  // namespace domdec
