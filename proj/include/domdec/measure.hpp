#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "domdec/geometry.hpp"

namespace domdec {

class PointSet {
public:
    PointSet() = default;
    PointSet(int dim, std::vector<double> coords);

    int dim() const { return dim_; }
    std::size_t size() const { return dim_ == 0 ? 0 : coords_.size() / static_cast<std::size_t>(dim_); }
    std::span<const double> operator[](std::size_t i) const {
        return {coords_.data() + i * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
    }
    const std::vector<double>& coords() const { return coords_; }
    void push_back(std::span<const double> p);
    double diameter() const;

private:
    int dim_ = 0;
    std::vector<double> coords_;
};

using SupportPtr = std::shared_ptr<const PointSet>;

SupportPtr make_support(int dim, std::vector<double> coords);

class DiscreteMeasure {
public:
    DiscreteMeasure() = default;
    DiscreteMeasure(SupportPtr support, std::vector<double> weights);

    const PointSet& points() const { return *support_; }
    const SupportPtr& support() const { return support_; }
    const std::vector<double>& weights() const { return weights_; }
    double weight(std::size_t i) const { return weights_[i]; }
    std::size_t size() const { return weights_.size(); }
    int dim() const { return support_ ? support_->dim() : 0; }
    double total_mass() const { return total_; }

private:
    SupportPtr support_;
    std::vector<double> weights_;
    double total_ = 0.0;
};

DiscreteMeasure normalize(const DiscreteMeasure& m);

struct Entry {
    std::uint32_t y;
    double w;
};
using SparseRow = std::vector<Entry>;

// Transport plan stored row-wise: one sparse row over the Y support per X atom.
class Coupling {
public:
    Coupling() = default;
    Coupling(SupportPtr x, SupportPtr y, std::vector<SparseRow> rows, std::vector<std::size_t> atom_cell = {},
             std::size_t cell_count = 0);

    static Coupling product(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                            std::vector<std::size_t> atom_cell = {}, std::size_t cell_count = 0);

    const PointSet& x_points() const { return *x_; }
    const PointSet& y_points() const { return *y_; }
    const SupportPtr& x_support() const { return x_; }
    const SupportPtr& y_support() const { return y_; }

    std::size_t rows() const { return rows_.size(); }
    std::size_t cols() const { return y_ ? y_->size() : 0; }
    const SparseRow& row(std::size_t i) const { return rows_[i]; }
    void set_row(std::size_t i, SparseRow r);
    double row_mass(std::size_t i) const;

    std::vector<double> x_marginal() const;
    std::vector<double> y_marginal() const;
    double total_mass() const;

    bool has_cells() const { return !atom_cell_.empty(); }
    std::size_t cell_count() const { return cell_atoms_.size(); }
    const std::vector<std::size_t>& atom_cell() const { return atom_cell_; }
    const std::vector<std::size_t>& atoms_in_cell(std::size_t cell) const { return cell_atoms_[cell]; }

    // Dense Y-marginal of the listed rows.
    std::vector<double> y_marginal_of(std::span<const std::size_t> atoms) const;

private:
    SupportPtr x_, y_;
    std::vector<SparseRow> rows_;
    std::vector<std::size_t> atom_cell_;
    std::vector<std::vector<std::size_t>> cell_atoms_;
};

// Y-marginal of pi on one basic cell, or on a composite cell of the given layout and phase.
DiscreteMeasure marginal_y_on_basic(const Coupling& pi, std::size_t basic);
DiscreteMeasure marginal_y_on_composite(const Coupling& pi, const PartitionLayout& layout, Phase p,
                                        std::size_t j);
std::vector<double> dense_y_on_basics(const Coupling& pi, std::span<const std::size_t> basics);

// Sum over the entries of b of phi(a/b) b, phi(s) = s log s - s + 1. +inf without absolute continuity.
double kl_divergence(std::span<const double> a, std::span<const double> b);
double kl_divergence(const DiscreteMeasure& a, const DiscreteMeasure& b);
double kl_divergence(const Coupling& a, const Coupling& b);
// KL(a | mu x nu) with mu, nu given densely over the X atoms and the Y support.
double kl_to_product(const Coupling& a, std::span<const double> mu, std::span<const double> nu);

// L1 distance between two couplings on the same atoms.
double tv_distance(const Coupling& a, const Coupling& b);

struct BlockApproximation {
    Coupling plan;
    std::size_t x_blocks = 0;
    std::size_t y_blocks = 0;
    std::size_t occupied_pairs = 0;
    // 2 log N with N = max(occupied X blocks, occupied Y blocks)
    double entropy_bound = 0.0;
};

BlockApproximation block_approximation(const Coupling& gamma, double L);

// Density of mu w.r.t. Lebesgue on [0,1]^d.
struct DensitySpec {
    enum class Kind { Uniform, PiecewiseConstant, Callable };

    Kind kind = Kind::Uniform;
    // piecewise constant along axis 0: values[k] on [breaks[k], breaks[k+1])
    std::vector<double> breaks;
    std::vector<double> values;
    std::function<double(std::span<const double>)> callable;
    double lower = 1.0;  // M_l
    double upper = 1.0;  // M_u
    std::optional<double> total_variation;

    static DensitySpec uniform();
    static DensitySpec piecewise(std::vector<double> breaks, std::vector<double> values);
    // base density with a dip to (1 - depth) x base over [0.5 - width/2, 0.5 + width/2], unit mass
    static DensitySpec bottleneck(double depth, double width);
    static DensitySpec from_callable(std::function<double(std::span<const double>)> f, double lower, double upper,
                                     std::optional<double> tv = std::nullopt);

    double density(std::span<const double> x) const;
    // exact for uniform and piecewise constant, Gauss-Legendre order 8 per axis for callables
    double box_mass(std::span<const double> lo, std::span<const double> hi) const;
    bool satisfies_bounds() const { return lower > 0.0 && lower <= upper; }
};

// Gauss-Legendre nodes on [-1,1] and weights summing to 2.
void gauss_legendre(int order, std::vector<double>& nodes, std::vector<double>& weights);

}  // namespace domdec
