#include "domdec/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "domdec/cell_solver.hpp"

namespace domdec {

namespace {

double sum(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0); }

void check_masses(double ma, double mb) {
    if (std::abs(ma - mb) > kMassMismatch) throw std::invalid_argument("W1: measures carry different masses");
}

double euclid(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t l = 0; l < a.size(); ++l) s += (a[l] - b[l]) * (a[l] - b[l]);
    return std::sqrt(s);
}

// Exact W1 between positive parts; wb is rescaled onto the mass of wa.
double w1_lp(const std::vector<std::span<const double>>& pa, const std::vector<double>& wa,
             const std::vector<std::span<const double>>& pb, const std::vector<double>& wb) {
    if (pa.empty() || pb.empty()) return 0.0;
    CellProblem cp;
    cp.rows = pa.size();
    cp.cols = pb.size();
    cp.mu = wa;
    cp.nu = wb;
    const double ma = sum(wa), mb = sum(wb);
    for (double& v : cp.nu) v *= ma / mb;
    cp.cost.resize(cp.rows * cp.cols);
    for (std::size_t i = 0; i < cp.rows; ++i)
        for (std::size_t j = 0; j < cp.cols; ++j) cp.cost[i * cp.cols + j] = euclid(pa[i], pb[j]);
    return transport_cost(cp, solve_exact(cp));
}

std::vector<double> dense_row(const Coupling& pi, std::size_t i) {
    std::vector<double> v(pi.cols(), 0.0);
    for (const auto& e : pi.row(i)) v[e.y] = e.w;
    return v;
}

std::vector<std::vector<double>> basic_fibers(const Coupling& pi, const PartitionLayout& layout) {
    std::vector<std::vector<double>> out(layout.basic_count());
    for (std::size_t i = 0; i < layout.basic_count(); ++i) {
        const std::size_t one[] = {i};
        out[i] = dense_y_on_basics(pi, one);
        const double m = sum(out[i]);
        if (m > 0.0)
            for (double& v : out[i]) v /= m;
    }
    return out;
}

}  // namespace

YMetric::YMetric(SupportPtr y) : y_(std::move(y)) {
    if (!y_) throw std::invalid_argument("metric without support");
    if (y_->dim() == 1) {
        order_.resize(y_->size());
        std::iota(order_.begin(), order_.end(), 0);
        std::stable_sort(order_.begin(), order_.end(),
                         [this](std::size_t a, std::size_t b) { return (*y_)[a][0] < (*y_)[b][0]; });
    }
}

double YMetric::w1(std::span<const double> a, std::span<const double> b) const {
    if (a.size() != y_->size() || b.size() != y_->size()) throw std::invalid_argument("W1: support size mismatch");
    check_masses(sum(a), sum(b));
    if (y_->dim() == 1) {
        double cum = 0.0, s = 0.0;
        for (std::size_t q = 0; q + 1 < order_.size(); ++q) {
            cum += a[order_[q]] - b[order_[q]];
            s += std::abs(cum) * ((*y_)[order_[q + 1]][0] - (*y_)[order_[q]][0]);
        }
        return s;
    }
    std::vector<std::span<const double>> pa, pb;
    std::vector<double> wa, wb;
    for (std::size_t y = 0; y < a.size(); ++y) {
        const double d = a[y] - b[y];
        if (d > 0.0) {
            pa.push_back((*y_)[y]);
            wa.push_back(d);
        } else if (d < 0.0) {
            pb.push_back((*y_)[y]);
            wb.push_back(-d);
        }
    }
    return w1_lp(pa, wa, pb, wb);
}

double w1_points(const PointSet& pa, std::span<const double> wa, const PointSet& pb, std::span<const double> wb) {
    if (pa.dim() != pb.dim()) throw std::invalid_argument("W1: dimension mismatch");
    if (wa.size() != pa.size() || wb.size() != pb.size()) throw std::invalid_argument("W1: weight size mismatch");
    check_masses(sum(wa), sum(wb));
    if (pa.dim() == 1) {
        std::vector<std::pair<double, double>> ev;
        for (std::size_t i = 0; i < pa.size(); ++i) ev.emplace_back(pa[i][0], wa[i]);
        for (std::size_t i = 0; i < pb.size(); ++i) ev.emplace_back(pb[i][0], -wb[i]);
        std::stable_sort(ev.begin(), ev.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
        double cum = 0.0, s = 0.0;
        for (std::size_t q = 0; q + 1 < ev.size(); ++q) {
            cum += ev[q].second;
            s += std::abs(cum) * (ev[q + 1].first - ev[q].first);
        }
        return s;
    }
    std::vector<std::span<const double>> xa, xb;
    std::vector<double> ma, mb;
    for (std::size_t i = 0; i < pa.size(); ++i)
        if (wa[i] > 0.0) {
            xa.push_back(pa[i]);
            ma.push_back(wa[i]);
        }
    for (std::size_t i = 0; i < pb.size(); ++i)
        if (wb[i] > 0.0) {
            xb.push_back(pb[i]);
            mb.push_back(wb[i]);
        }
    return w1_lp(xa, ma, xb, mb);
}

double w1_y(const DiscreteMeasure& a, const DiscreteMeasure& b) {
    if (a.support() == b.support()) return YMetric(a.support()).w1(a.weights(), b.weights());
    return w1_points(a.points(), a.weights(), b.points(), b.weights());
}

double w1_joint(const Coupling& a, const Coupling& b) {
    auto atoms = [](const Coupling& c, std::vector<double>& w) {
        const int dx = c.x_points().dim(), dy = c.y_points().dim();
        PointSet pts(dx + dy, {});
        std::vector<double> buf(static_cast<std::size_t>(dx + dy));
        for (std::size_t i = 0; i < c.rows(); ++i)
            for (const auto& e : c.row(i)) {
                if (e.w <= 0.0) continue;
                std::copy(c.x_points()[i].begin(), c.x_points()[i].end(), buf.begin());
                std::copy(c.y_points()[e.y].begin(), c.y_points()[e.y].end(), buf.begin() + dx);
                pts.push_back(buf);
                w.push_back(e.w);
            }
        return pts;
    };
    std::vector<double> wa, wb;
    const PointSet pa = atoms(a, wa), pb = atoms(b, wb);
    if (pa.dim() != pb.dim()) throw std::invalid_argument("W1 joint: dimension mismatch");
    check_masses(sum(wa), sum(wb));
    std::vector<std::span<const double>> xa, xb;
    for (std::size_t i = 0; i < pa.size(); ++i) xa.push_back(pa[i]);
    for (std::size_t i = 0; i < pb.size(); ++i) xb.push_back(pb[i]);
    return w1_lp(xa, wa, xb, wb);
}

std::vector<double> basic_masses(const Coupling& pi) {
    if (!pi.has_cells()) throw std::invalid_argument("coupling carries no basic-cell tags");
    std::vector<double> m(pi.cell_count(), 0.0);
    for (std::size_t c = 0; c < pi.cell_count(); ++c)
        for (std::size_t a : pi.atoms_in_cell(c)) m[c] += pi.row_mass(a);
    return m;
}

double vertical_metric(const Coupling& a, const Coupling& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("vertical metric: shape mismatch");
    const YMetric metric(a.y_support());
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double ma = a.row_mass(i), mb = b.row_mass(i);
        if (std::abs(ma - mb) > kMassMismatch) throw std::invalid_argument("vertical metric: X-marginals differ");
        if (ma <= 0.0) continue;
        auto ra = dense_row(a, i), rb = dense_row(b, i);
        for (double& v : rb) v *= ma / mb;
        s += metric.w1(ra, rb);
    }
    return s;
}

double vertical_metric(const TrajectorySnapshot& a, const TrajectorySnapshot& b, const PartitionLayout& layout,
                       std::span<const double> basic_mass, const YMetric& metric) {
    if (a.n != layout.n() || b.n != layout.n()) throw std::invalid_argument("vertical metric: snapshot scale mismatch");
    if (basic_mass.size() != layout.basic_count()) throw std::invalid_argument("vertical metric: mass size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < layout.basic_count(); ++i) {
        const std::size_t ja = layout.composite_of_basic(i, a.phase), jb = layout.composite_of_basic(i, b.phase);
        s += basic_mass[i] * metric.w1(a.fiber[ja], b.fiber[jb]);
    }
    return s;
}

double vertical_metric(const TrajectorySnapshot& a, const Coupling& b, const PartitionLayout& layout,
                       const YMetric& metric) {
    if (!b.has_cells()) throw std::invalid_argument("vertical metric: coupling carries no cell tags");
    double s = 0.0;
    for (std::size_t x = 0; x < b.rows(); ++x) {
        const double m = b.row_mass(x);
        if (m <= 0.0) continue;
        auto r = dense_row(b, x);
        for (double& v : r) v /= m;
        const std::size_t j = layout.composite_of_basic(b.atom_cell()[x], a.phase);
        s += m * metric.w1(a.fiber[j], r);
    }
    return s;
}

Coupling snapshot_coupling(const TrajectorySnapshot& s, const PartitionLayout& layout, const Coupling& tmpl) {
    std::vector<SparseRow> rows(tmpl.rows());
    for (std::size_t x = 0; x < tmpl.rows(); ++x) {
        const double m = tmpl.row_mass(x);
        const auto& f = s.fiber[layout.composite_of_basic(tmpl.atom_cell()[x], s.phase)];
        for (std::size_t y = 0; y < f.size(); ++y)
            if (f[y] > 0.0) rows[x].push_back({static_cast<std::uint32_t>(y), m * f[y]});
    }
    return Coupling(tmpl.x_support(), tmpl.y_support(), std::move(rows), tmpl.atom_cell(), tmpl.cell_count());
}

double wtv(const TrajectorySnapshot& s, const PartitionLayout& layout, const YMetric& metric) {
    double total = 0.0;
    for (const Adjacency& adj : layout.adjacent_pairs(s.phase))
        total += adj.face * metric.w1(s.fiber[adj.first], s.fiber[adj.second]);
    return total;
}

double wtvb(const Coupling& pi, const PartitionLayout& layout, const YMetric& metric) {
    const auto rho = basic_fibers(pi, layout);
    const int d = layout.dim(), n = layout.n();
    double total = 0.0;
    for (std::size_t i = 0; i < layout.basic_count(); ++i) {
        auto m = layout.basic_multi_index(i);
        for (int l = 0; l < d; ++l) {
            if (m[l] + 2 >= n) continue;
            m[l] += 2;
            total += metric.w1(rho[i], rho[layout.basic_flat(m)]);
            m[l] -= 2;
        }
    }
    return total / std::pow(static_cast<double>(n), d - 1);
}

double mass_balance_defect(const PartitionLayout& layout, std::span<const double> basic_mass, Phase p) {
    if (basic_mass.size() != layout.basic_count()) throw std::invalid_argument("mass vector size mismatch");
    const double share = 1.0 / static_cast<double>(layout.sign_count());
    double total = 0.0;
    for (const CompositeCell& c : layout.composites(p)) {
        double mj = 0.0;
        for (std::size_t i : c.basic) mj += basic_mass[i];
        for (std::size_t i : c.basic) total += std::abs(basic_mass[i] / mj - share);
    }
    return total / std::pow(static_cast<double>(layout.n()), layout.dim() - 1);
}

BoundCheck wtv_bound_check(double wtv_value, double wtvb_value, int d, double diam_y, double m_lower, double tv) {
    const double two_d = std::pow(2.0, d);
    return {wtv_value, 0.5 * wtvb_value + d * diam_y * (two_d * two_d + two_d * std::sqrt(d) / m_lower * tv)};
}

BoundCheck equicontinuity_check(double w_step, double wtvb_value, int d, int n, double diam_y, double m_lower,
                                double m_upper, double tv, double c) {
    const double rhs = m_upper / n *
                       (c * wtvb_value + std::pow(2.0, d + 1) * diam_y * std::sqrt(d) / m_lower * tv + 2.0 * d * diam_y);
    return {w_step, rhs};
}

BoundCheck wtvb_bound_check(double wtvb_value, double wtv_init, double diam_y) {
    return {wtvb_value, 2.0 * wtv_init + 4.0 * diam_y};
}

BoundCheck mass_balance_check(double defect, int d, double m_lower, double tv) {
    return {defect, std::sqrt(d) / m_lower * tv};
}

TestFunction::TestFunction(double cutoff, double kx, double ky, double y_phase)
    : cutoff_(cutoff), kx_(kx), ky_(ky), y_phase_(y_phase) {
    if (!(cutoff > 0.0)) throw std::invalid_argument("test function cutoff must be positive");
}

TestFunction TestFunction::bump_sin_cos(double cutoff) { return TestFunction(cutoff, M_PI, M_PI); }

TestFunction TestFunction::bump_sin_sin(double cutoff) { return TestFunction(cutoff, M_PI, M_PI, M_PI / 2); }

double TestFunction::psi(double t) const {
    if (t >= cutoff_) return 0.0;
    const double u = t / cutoff_;
    return (1.0 - u * u) * (1.0 - u * u);
}

double TestFunction::dpsi(double t) const {
    if (t >= cutoff_) return 0.0;
    const double u = t / cutoff_;
    return -4.0 * u * (1.0 - u * u) / cutoff_;
}

double TestFunction::psi_integral(double t) const {
    const double s = std::min(t, cutoff_);
    const double T = cutoff_;
    return s - 2.0 * s * s * s / (3.0 * T * T) + std::pow(s, 5) / (5.0 * T * T * T * T);
}

double TestFunction::spatial(std::span<const double> x) const {
    double v = 1.0;
    for (double c : x) v *= std::sin(kx_ * c);
    return v;
}

std::vector<double> TestFunction::spatial_grad(std::span<const double> x) const {
    std::vector<double> g(x.size(), 1.0);
    for (std::size_t l = 0; l < x.size(); ++l)
        for (std::size_t m = 0; m < x.size(); ++m)
            g[l] *= (m == l) ? kx_ * std::cos(kx_ * x[m]) : std::sin(kx_ * x[m]);
    return g;
}

double TestFunction::y_factor(std::span<const double> y) const {
    double v = 1.0;
    for (double c : y) v *= std::cos(ky_ * c - y_phase_);
    return v;
}

double TestFunction::value(double t, std::span<const double> x, std::span<const double> y) const {
    return psi(t) * spatial(x) * y_factor(y);
}

double TestFunction::dt(double t, std::span<const double> x, std::span<const double> y) const {
    return dpsi(t) * spatial(x) * y_factor(y);
}

std::vector<double> TestFunction::grad_x(double t, std::span<const double> x, std::span<const double> y) const {
    auto g = spatial_grad(x);
    const double f = psi(t) * y_factor(y);
    for (double& v : g) v *= f;
    return g;
}

ResidualTerms ce_residual(const RunRecord& run, const PartitionLayout& layout, const Coupling& pi_init,
                          const TestFunction& phi) {
    const int n = layout.n(), d = layout.dim();
    const long K = max_iterations(phi.cutoff(), n);
    std::vector<double> h(pi_init.cols());
    for (std::size_t y = 0; y < h.size(); ++y) h[y] = phi.y_factor(pi_init.y_points()[y]);

    ResidualTerms r;
    for (long k = 0; k < K; ++k) {
        const TrajectorySnapshot* snap = nullptr;
        try {
            snap = &run.snapshot_at(k);
        } catch (const std::out_of_range&) {
            throw std::invalid_argument("snapshots do not cover the support of the test function");
        }
        if (snap->n != n || snap->ny != h.size()) throw std::invalid_argument("snapshot does not match the layout");
        const double t0 = static_cast<double>(k) / n, t1 = static_cast<double>(k + 1) / n;
        const double dpsi = phi.psi(t1) - phi.psi(t0);
        const double ipsi = phi.psi_integral(t1) - phi.psi_integral(t0);
        const auto& cells = layout.composites(snap->phase);
        for (std::size_t j = 0; j < cells.size(); ++j) {
            const auto& xj = cells[j].center;
            const double g = phi.spatial(xj);
            const auto grad = phi.spatial_grad(xj);
            double fh = 0.0;
            for (std::size_t y = 0; y < h.size(); ++y) fh += snap->fiber[j][y] * h[y];
            r.time_term += snap->mass[j] * g * dpsi * fh;
            double mom = 0.0;
            for (int l = 0; l < d; ++l) {
                double oh = 0.0;
                for (std::size_t y = 0; y < h.size(); ++y) oh += snap->momentum[j][l * h.size() + y] * h[y];
                mom += grad[l] * oh;
            }
            r.momentum_term += snap->mass[j] * ipsi * mom;
        }
    }
    for (std::size_t x = 0; x < pi_init.rows(); ++x) {
        const double g = phi.spatial(pi_init.x_points()[x]) * phi.psi(0.0);
        for (const auto& e : pi_init.row(x)) r.initial_term += e.w * g * h[e.y];
    }
    return r;
}

}  // namespace domdec
