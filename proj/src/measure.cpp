#include "domdec/measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>

namespace domdec {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_nonnegative(std::span<const double> w) {
    for (double v : w)
        if (!(v >= 0.0)) throw std::invalid_argument("negative or NaN weight");
}

double phi_term(double a, double b) {
    if (b > 0.0) return a > 0.0 ? a * std::log(a / b) - a + b : b;
    return a > 0.0 ? kInf : 0.0;
}

}  // namespace

PointSet::PointSet(int dim, std::vector<double> coords) : dim_(dim), coords_(std::move(coords)) {
    if (dim <= 0) throw std::invalid_argument("point dimension must be positive");
    if (coords_.size() % static_cast<std::size_t>(dim) != 0)
        throw std::invalid_argument("coordinate count not divisible by dimension");
}

void PointSet::push_back(std::span<const double> p) {
    if (static_cast<int>(p.size()) != dim_) throw std::invalid_argument("point dimension mismatch");
    coords_.insert(coords_.end(), p.begin(), p.end());
}

double PointSet::diameter() const {
    double best = 0.0;
    const std::size_t m = size();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) {
            double s = 0.0;
            for (int l = 0; l < dim_; ++l) {
                double t = (*this)[i][l] - (*this)[j][l];
                s += t * t;
            }
            best = std::max(best, s);
        }
    return std::sqrt(best);
}

SupportPtr make_support(int dim, std::vector<double> coords) {
    return std::make_shared<const PointSet>(dim, std::move(coords));
}

DiscreteMeasure::DiscreteMeasure(SupportPtr support, std::vector<double> weights)
    : support_(std::move(support)), weights_(std::move(weights)) {
    if (!support_) throw std::invalid_argument("measure without support");
    if (support_->size() != weights_.size()) throw std::invalid_argument("support/weight size mismatch");
    check_nonnegative(weights_);
    for (double w : weights_) total_ += w;
}

DiscreteMeasure normalize(const DiscreteMeasure& m) {
    if (!(m.total_mass() > 0.0)) throw std::invalid_argument("cannot normalize a zero-mass measure");
    std::vector<double> w(m.weights());
    for (double& v : w) v /= m.total_mass();
    return DiscreteMeasure(m.support(), std::move(w));
}

Coupling::Coupling(SupportPtr x, SupportPtr y, std::vector<SparseRow> rows, std::vector<std::size_t> atom_cell,
                   std::size_t cell_count)
    : x_(std::move(x)), y_(std::move(y)), rows_(std::move(rows)), atom_cell_(std::move(atom_cell)) {
    if (!x_ || !y_) throw std::invalid_argument("coupling without supports");
    if (rows_.size() != x_->size()) throw std::invalid_argument("row count differs from X atom count");
    for (const auto& r : rows_)
        for (const auto& e : r) {
            if (e.y >= y_->size()) throw std::out_of_range("coupling entry outside Y support");
            if (!(e.w >= 0.0)) throw std::invalid_argument("negative coupling weight");
        }
    if (!atom_cell_.empty()) {
        if (atom_cell_.size() != rows_.size()) throw std::invalid_argument("atom/cell tag size mismatch");
        std::size_t cells = cell_count;
        for (std::size_t c : atom_cell_) cells = std::max(cells, c + 1);
        cell_atoms_.resize(cells);
        for (std::size_t a = 0; a < atom_cell_.size(); ++a) cell_atoms_[atom_cell_[a]].push_back(a);
    }
}

Coupling Coupling::product(const DiscreteMeasure& mu, const DiscreteMeasure& nu, std::vector<std::size_t> atom_cell,
                           std::size_t cell_count) {
    const double mass = nu.total_mass();
    if (!(mass > 0.0)) throw std::invalid_argument("product with zero-mass second factor");
    std::vector<SparseRow> rows(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i)
        for (std::size_t j = 0; j < nu.size(); ++j) {
            double w = mu.weight(i) * nu.weight(j) / mass;
            if (w > 0.0) rows[i].push_back({static_cast<std::uint32_t>(j), w});
        }
    return Coupling(mu.support(), nu.support(), std::move(rows), std::move(atom_cell), cell_count);
}

void Coupling::set_row(std::size_t i, SparseRow r) { rows_.at(i) = std::move(r); }

double Coupling::row_mass(std::size_t i) const {
    double s = 0.0;
    for (const auto& e : rows_[i]) s += e.w;
    return s;
}

std::vector<double> Coupling::x_marginal() const {
    std::vector<double> m(rows_.size());
    for (std::size_t i = 0; i < rows_.size(); ++i) m[i] = row_mass(i);
    return m;
}

std::vector<double> Coupling::y_marginal() const {
    std::vector<double> m(cols(), 0.0);
    for (const auto& r : rows_)
        for (const auto& e : r) m[e.y] += e.w;
    return m;
}

double Coupling::total_mass() const {
    double s = 0.0;
    for (std::size_t i = 0; i < rows_.size(); ++i) s += row_mass(i);
    return s;
}

std::vector<double> Coupling::y_marginal_of(std::span<const std::size_t> atoms) const {
    std::vector<double> m(cols(), 0.0);
    for (std::size_t a : atoms)
        for (const auto& e : rows_[a]) m[e.y] += e.w;
    return m;
}

std::vector<double> dense_y_on_basics(const Coupling& pi, std::span<const std::size_t> basics) {
    if (!pi.has_cells()) throw std::invalid_argument("coupling carries no basic-cell tags");
    std::vector<double> m(pi.cols(), 0.0);
    for (std::size_t c : basics) {
        if (c >= pi.cell_count()) throw std::out_of_range("basic cell not present in coupling");
        for (std::size_t a : pi.atoms_in_cell(c))
            for (const auto& e : pi.row(a)) m[e.y] += e.w;
    }
    return m;
}

DiscreteMeasure marginal_y_on_basic(const Coupling& pi, std::size_t basic) {
    const std::size_t one[] = {basic};
    return DiscreteMeasure(pi.y_support(), dense_y_on_basics(pi, one));
}

DiscreteMeasure marginal_y_on_composite(const Coupling& pi, const PartitionLayout& layout, Phase p, std::size_t j) {
    return DiscreteMeasure(pi.y_support(), dense_y_on_basics(pi, layout.composite(p, j).basic));
}

double kl_divergence(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("KL: support enumerations differ");
    check_nonnegative(a);
    check_nonnegative(b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += phi_term(a[i], b[i]);
    return s;
}

double kl_divergence(const DiscreteMeasure& a, const DiscreteMeasure& b) {
    return kl_divergence(std::span<const double>(a.weights()), std::span<const double>(b.weights()));
}

double kl_divergence(const Coupling& a, const Coupling& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("KL: coupling shapes differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto& ra = a.row(i);
        const auto& rb = b.row(i);
        std::size_t p = 0, q = 0;
        while (p < ra.size() || q < rb.size()) {
            if (q == rb.size() || (p < ra.size() && ra[p].y < rb[q].y)) {
                s += phi_term(ra[p].w, 0.0);
                ++p;
            } else if (p == ra.size() || rb[q].y < ra[p].y) {
                s += phi_term(0.0, rb[q].w);
                ++q;
            } else {
                s += phi_term(ra[p].w, rb[q].w);
                ++p;
                ++q;
            }
        }
    }
    return s;
}

double kl_to_product(const Coupling& a, std::span<const double> mu, std::span<const double> nu) {
    if (mu.size() != a.rows() || nu.size() != a.cols()) throw std::invalid_argument("KL: product shape mismatch");
    check_nonnegative(mu);
    check_nonnegative(nu);
    double mass_mu = 0.0, mass_nu = 0.0;
    for (double v : mu) mass_mu += v;
    for (double v : nu) mass_nu += v;
    double s = mass_mu * mass_nu;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (const auto& e : a.row(i)) {
            if (e.w <= 0.0) continue;
            const double ref = mu[i] * nu[e.y];
            if (ref <= 0.0) return kInf;
            s += e.w * std::log(e.w / ref) - e.w;
        }
    return s;
}

double tv_distance(const Coupling& a, const Coupling& b) {
    if (a.rows() != b.rows()) throw std::invalid_argument("TV: row counts differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto& ra = a.row(i);
        const auto& rb = b.row(i);
        std::size_t p = 0, q = 0;
        while (p < ra.size() || q < rb.size()) {
            if (q == rb.size() || (p < ra.size() && ra[p].y < rb[q].y)) {
                s += ra[p++].w;
            } else if (p == ra.size() || rb[q].y < ra[p].y) {
                s += rb[q++].w;
            } else {
                s += std::abs(ra[p++].w - rb[q++].w);
            }
        }
    }
    return s;
}

BlockApproximation block_approximation(const Coupling& gamma, double L) {
    if (!(L > 0.0)) throw std::invalid_argument("block scale L must be positive");
    auto block_ids = [L](const PointSet& pts) {
        std::map<std::vector<long>, std::size_t> ids;
        std::vector<std::vector<long>> keys(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) {
            auto p = pts[i];
            keys[i].resize(p.size());
            for (std::size_t l = 0; l < p.size(); ++l) keys[i][l] = static_cast<long>(std::floor(p[l] / L));
            ids.emplace(keys[i], 0);
        }
        std::size_t next = 0;
        for (auto& kv : ids) kv.second = next++;
        std::vector<std::size_t> out(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) out[i] = ids[keys[i]];
        return std::make_pair(out, next);
    };
    const auto [xb, nx] = block_ids(gamma.x_points());
    const auto [yb, ny] = block_ids(gamma.y_points());
    const auto mu = gamma.x_marginal();
    const auto nu = gamma.y_marginal();

    std::vector<double> mu_b(nx, 0.0), nu_b(ny, 0.0), mass(nx * ny, 0.0);
    for (std::size_t i = 0; i < mu.size(); ++i) mu_b[xb[i]] += mu[i];
    for (std::size_t j = 0; j < nu.size(); ++j) nu_b[yb[j]] += nu[j];
    for (std::size_t i = 0; i < gamma.rows(); ++i)
        for (const auto& e : gamma.row(i)) mass[xb[i] * ny + yb[e.y]] += e.w;

    std::vector<SparseRow> rows(gamma.rows());
    for (std::size_t i = 0; i < gamma.rows(); ++i) {
        if (mu[i] <= 0.0) continue;
        const std::size_t j = xb[i];
        for (std::size_t y = 0; y < nu.size(); ++y) {
            const double g = mass[j * ny + yb[y]];
            if (g <= 0.0 || nu[y] <= 0.0) continue;
            const double w = g / (mu_b[j] * nu_b[yb[y]]) * mu[i] * nu[y];
            if (w > 0.0) rows[i].push_back({static_cast<std::uint32_t>(y), w});
        }
    }

    BlockApproximation out;
    out.plan = Coupling(gamma.x_support(), gamma.y_support(), std::move(rows), gamma.atom_cell(),
                        gamma.cell_count());
    out.x_blocks = static_cast<std::size_t>(std::count_if(mu_b.begin(), mu_b.end(), [](double v) { return v > 0; }));
    out.y_blocks = static_cast<std::size_t>(std::count_if(nu_b.begin(), nu_b.end(), [](double v) { return v > 0; }));
    out.occupied_pairs = static_cast<std::size_t>(std::count_if(mass.begin(), mass.end(), [](double v) { return v > 0; }));
    out.entropy_bound = 2.0 * std::log(static_cast<double>(std::max(out.x_blocks, out.y_blocks)));
    return out;
}

void gauss_legendre(int order, std::vector<double>& nodes, std::vector<double>& weights) {
    if (order < 1) throw std::invalid_argument("quadrature order must be >= 1");
    nodes.assign(order, 0.0);
    weights.assign(order, 0.0);
    for (int i = 0; i < (order + 1) / 2; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (order + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p1 = 1.0, p2 = 0.0;
            for (int j = 1; j <= order; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
            }
            pp = order * (z * p1 - p2) / (z * z - 1.0);
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) < 1e-15) break;
        }
        nodes[i] = -z;
        nodes[order - 1 - i] = z;
        weights[i] = weights[order - 1 - i] = 2.0 / ((1.0 - z * z) * pp * pp);
    }
}

DensitySpec DensitySpec::uniform() {
    DensitySpec s;
    s.kind = Kind::Uniform;
    s.lower = s.upper = 1.0;
    s.total_variation = 0.0;
    return s;
}

DensitySpec DensitySpec::piecewise(std::vector<double> breaks, std::vector<double> values) {
    if (breaks.size() != values.size() + 1 || values.empty())
        throw std::invalid_argument("piecewise density needs one more break than values");
    if (breaks.front() != 0.0 || breaks.back() != 1.0) throw std::invalid_argument("breaks must span [0,1]");
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k)
        if (!(breaks[k] < breaks[k + 1])) throw std::invalid_argument("breaks must increase");
    double mass = 0.0;
    for (std::size_t k = 0; k < values.size(); ++k) {
        if (!(values[k] > 0.0)) throw std::invalid_argument("density values must be positive");
        mass += values[k] * (breaks[k + 1] - breaks[k]);
    }
    for (double& v : values) v /= mass;
    DensitySpec s;
    s.kind = Kind::PiecewiseConstant;
    s.lower = *std::min_element(values.begin(), values.end());
    s.upper = *std::max_element(values.begin(), values.end());
    double tv = 0.0;
    for (std::size_t k = 0; k + 1 < values.size(); ++k) tv += std::abs(values[k + 1] - values[k]);
    s.total_variation = tv;
    s.breaks = std::move(breaks);
    s.values = std::move(values);
    return s;
}

DensitySpec DensitySpec::bottleneck(double depth, double width) {
    if (!(depth >= 0.0 && depth < 1.0)) throw std::invalid_argument("dip depth must lie in [0,1)");
    if (!(width > 0.0 && width < 1.0)) throw std::invalid_argument("dip width must lie in (0,1)");
    if (depth == 0.0) return uniform();
    return piecewise({0.0, 0.5 - width / 2, 0.5 + width / 2, 1.0}, {1.0, 1.0 - depth, 1.0});
}

DensitySpec DensitySpec::from_callable(std::function<double(std::span<const double>)> f, double lower, double upper,
                                       std::optional<double> tv) {
    DensitySpec s;
    s.kind = Kind::Callable;
    s.callable = std::move(f);
    s.lower = lower;
    s.upper = upper;
    s.total_variation = tv;
    return s;
}

double DensitySpec::density(std::span<const double> x) const {
    switch (kind) {
        case Kind::Uniform:
            return 1.0;
        case Kind::PiecewiseConstant: {
            auto it = std::upper_bound(breaks.begin(), breaks.end(), x[0]);
            std::size_t k = static_cast<std::size_t>(std::distance(breaks.begin(), it));
            k = std::clamp<std::size_t>(k, 1, values.size());
            return values[k - 1];
        }
        case Kind::Callable:
            return callable(x);
    }
    return 0.0;
}

double DensitySpec::box_mass(std::span<const double> lo, std::span<const double> hi) const {
    const std::size_t d = lo.size();
    double vol_rest = 1.0;
    for (std::size_t l = 1; l < d; ++l) vol_rest *= hi[l] - lo[l];
    switch (kind) {
        case Kind::Uniform:
            return vol_rest * (hi[0] - lo[0]);
        case Kind::PiecewiseConstant: {
            double s = 0.0;
            for (std::size_t k = 0; k < values.size(); ++k) {
                double a = std::max(lo[0], breaks[k]), b = std::min(hi[0], breaks[k + 1]);
                if (b > a) s += values[k] * (b - a);
            }
            return s * vol_rest;
        }
        case Kind::Callable: {
            constexpr int q = 8;
            std::vector<double> nodes, w;
            gauss_legendre(q, nodes, w);
            std::size_t total = 1;
            for (std::size_t l = 0; l < d; ++l) total *= q;
            std::vector<double> x(d);
            double s = 0.0;
            for (std::size_t idx = 0; idx < total; ++idx) {
                std::size_t rem = idx;
                double weight = 1.0;
                for (std::size_t l = d; l-- > 0;) {
                    const std::size_t k = rem % q;
                    rem /= q;
                    const double half = (hi[l] - lo[l]) / 2;
                    x[l] = lo[l] + half * (nodes[k] + 1.0);
                    weight *= half * w[k];
                }
                s += weight * callable(x);
            }
            return s;
        }
    }
    return 0.0;
}

}  // namespace domdec
