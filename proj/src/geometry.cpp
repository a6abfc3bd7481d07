#include "domdec/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace domdec {

Phase phase_for_iteration(long k) { return (k % 2 != 0) ? Phase::A : Phase::B; }

Phase other(Phase p) { return p == Phase::A ? Phase::B : Phase::A; }

std::string_view to_string(Phase p) { return p == Phase::A ? "A" : "B"; }

namespace {

struct AxisGroup {
    std::vector<int> cells;
    double center;
    double lower;
    double upper;
    int minus;  // basic index for b = -1 along this axis, -1 if absent
    int plus;
};

std::vector<AxisGroup> axis_groups(int n, Phase p) {
    std::vector<AxisGroup> out;
    const double h = 1.0 / n;
    if (p == Phase::A) {
        for (int g = 0; g < n / 2; ++g)
            out.push_back({{2 * g, 2 * g + 1}, (2 * g + 1) * h, 2 * g * h, (2 * g + 2) * h, 2 * g, 2 * g + 1});
    } else {
        out.push_back({{0}, 0.0, 0.0, h, -1, 0});
        for (int g = 1; g < n / 2; ++g)
            out.push_back({{2 * g - 1, 2 * g}, 2 * g * h, (2 * g - 1) * h, (2 * g + 1) * h, 2 * g - 1, 2 * g});
        out.push_back({{n - 1}, 1.0, (n - 1) * h, 1.0, n - 1, -1});
    }
    return out;
}

int ceil_minus_one(double u) { return static_cast<int>(std::ceil(u)) - 1; }

void check_point(std::span<const double> x, int d) {
    if (static_cast<int>(x.size()) != d) throw std::invalid_argument("point dimension mismatch");
    for (double v : x)
        if (!(v >= 0.0 && v <= 1.0)) throw std::out_of_range("point outside [0,1]^d");
}

}  // namespace

PartitionLayout::PartitionLayout(int d, int n) : d_(d), n_(n) {
    if (d < 1) throw std::invalid_argument("dimension must be >= 1");
    if (n < 2 || n % 2 != 0) throw std::invalid_argument("scale n must be even and >= 2, got " + std::to_string(n));
    basic_count_ = 1;
    for (int l = 0; l < d; ++l) basic_count_ *= static_cast<std::size_t>(n);
    basic_to_a_.assign(basic_count_, 0);
    basic_to_b_.assign(basic_count_, 0);
    build(Phase::A);
    build(Phase::B);

    for (Phase p : {Phase::A, Phase::B}) {
        auto& cells = p == Phase::A ? comp_a_ : comp_b_;
        for (auto& c : cells) {
            for (std::size_t i : c.basic) {
                c.neighbors.push_back(composite_of_basic(i, other(p)));
                c.shared.push_back(i);
            }
        }
    }
}

void PartitionLayout::build(Phase p) {
    const auto groups = axis_groups(n_, p);
    const int g = static_cast<int>(groups.size());
    std::size_t total = 1;
    for (int l = 0; l < d_; ++l) total *= static_cast<std::size_t>(g);

    auto& cells = p == Phase::A ? comp_a_ : comp_b_;
    auto& owner = p == Phase::A ? basic_to_a_ : basic_to_b_;
    cells.resize(total);

    std::vector<int> multi(d_);
    for (std::size_t j = 0; j < total; ++j) {
        std::size_t rem = j;
        for (int l = d_ - 1; l >= 0; --l) {
            multi[l] = static_cast<int>(rem % g);
            rem /= g;
        }
        CompositeCell& c = cells[j];
        c.group = multi;
        c.center.resize(d_);
        c.lower.resize(d_);
        c.upper.resize(d_);
        std::size_t count = 1;
        for (int l = 0; l < d_; ++l) {
            const AxisGroup& ag = groups[multi[l]];
            c.center[l] = ag.center;
            c.lower[l] = ag.lower;
            c.upper[l] = ag.upper;
            count *= ag.cells.size();
        }
        c.interior = count == sign_count();

        // lexicographic product of per-axis cell lists
        std::vector<int> pick(d_, 0), idx(d_);
        for (std::size_t q = 0; q < count; ++q) {
            for (int l = 0; l < d_; ++l) idx[l] = groups[multi[l]].cells[pick[l]];
            std::size_t flat = basic_flat(idx);
            c.basic.push_back(flat);
            owner[flat] = j;
            for (int l = d_ - 1; l >= 0; --l) {
                if (++pick[l] < static_cast<int>(groups[multi[l]].cells.size())) break;
                pick[l] = 0;
            }
        }

        c.offset.assign(sign_count(), kNoCell);
        for (std::size_t beta = 0; beta < sign_count(); ++beta) {
            const auto b = sign_vector(beta);
            bool present = true;
            for (int l = 0; l < d_; ++l) {
                const AxisGroup& ag = groups[multi[l]];
                idx[l] = b[l] < 0 ? ag.minus : ag.plus;
                if (idx[l] < 0) present = false;
            }
            if (present) c.offset[beta] = static_cast<long>(basic_flat(idx));
        }
    }

    auto& adj = p == Phase::A ? adj_a_ : adj_b_;
    for (std::size_t j = 0; j < total; ++j) {
        const CompositeCell& c = cells[j];
        std::size_t stride = 1;
        for (int l = d_ - 1; l >= 0; --l) {
            if (c.group[l] + 1 < g) {
                double face = 1.0;
                for (int m = 0; m < d_; ++m)
                    if (m != l) face *= c.upper[m] - c.lower[m];
                adj.push_back({j, j + stride, l, face});
            }
            stride *= static_cast<std::size_t>(g);
        }
    }
    std::sort(adj.begin(), adj.end(), [](const Adjacency& a, const Adjacency& b) {
        return a.first != b.first ? a.first < b.first : a.second < b.second;
    });
}

std::vector<int> PartitionLayout::basic_multi_index(std::size_t flat) const {
    if (flat >= basic_count_) throw std::out_of_range("basic cell index out of range");
    std::vector<int> m(d_);
    for (int l = d_ - 1; l >= 0; --l) {
        m[l] = static_cast<int>(flat % static_cast<std::size_t>(n_));
        flat /= static_cast<std::size_t>(n_);
    }
    return m;
}

std::size_t PartitionLayout::basic_flat(std::span<const int> multi) const {
    if (static_cast<int>(multi.size()) != d_) throw std::invalid_argument("multi-index dimension mismatch");
    std::size_t flat = 0;
    for (int l = 0; l < d_; ++l) {
        if (multi[l] < 0 || multi[l] >= n_) throw std::out_of_range("multi-index out of range");
        flat = flat * static_cast<std::size_t>(n_) + static_cast<std::size_t>(multi[l]);
    }
    return flat;
}

std::vector<double> PartitionLayout::basic_center(std::size_t flat) const {
    auto m = basic_multi_index(flat);
    std::vector<double> x(d_);
    for (int l = 0; l < d_; ++l) x[l] = (m[l] + 0.5) / n_;
    return x;
}

std::vector<double> PartitionLayout::basic_lower(std::size_t flat) const {
    auto m = basic_multi_index(flat);
    std::vector<double> x(d_);
    for (int l = 0; l < d_; ++l) x[l] = static_cast<double>(m[l]) / n_;
    return x;
}

std::size_t PartitionLayout::composite_of(std::span<const double> x, Phase p) const {
    check_point(x, d_);
    const int g = p == Phase::A ? n_ / 2 : n_ / 2 + 1;
    std::size_t flat = 0;
    for (int l = 0; l < d_; ++l) {
        const double u = x[l] * n_;
        int k = p == Phase::A ? ceil_minus_one(u / 2.0) : static_cast<int>(std::ceil((u - 1.0) / 2.0));
        k = std::clamp(k, 0, g - 1);
        flat = flat * static_cast<std::size_t>(g) + static_cast<std::size_t>(k);
    }
    return flat;
}

std::size_t PartitionLayout::basic_of(std::span<const double> x) const {
    check_point(x, d_);
    std::vector<int> m(d_);
    for (int l = 0; l < d_; ++l) m[l] = std::clamp(ceil_minus_one(x[l] * n_), 0, n_ - 1);
    return basic_flat(m);
}

std::vector<int> PartitionLayout::sign_vector(std::size_t beta) const {
    std::vector<int> b(d_);
    for (int l = 0; l < d_; ++l) b[l] = ((beta >> (d_ - 1 - l)) & 1U) ? 1 : -1;
    return b;
}

}  // namespace domdec
