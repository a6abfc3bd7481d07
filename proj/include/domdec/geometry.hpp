#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace domdec {

enum class Phase { A, B };

// Iteration k uses partition A when k is odd, B when k is even (k = 0 included).
Phase phase_for_iteration(long k);
Phase other(Phase p);
std::string_view to_string(Phase p);

inline constexpr long kNoCell = -1;

struct CompositeCell {
    std::vector<int> group;           // per-axis group index
    std::vector<std::size_t> basic;   // flat basic indices, lexicographic
    std::vector<double> center;
    std::vector<double> lower;
    std::vector<double> upper;
    bool interior = false;            // holds all 2^d basic cells
    // offset[beta] = basic cell with center x_J + b/(2n), kNoCell if absent.
    // beta enumerates b in {-1,+1}^d lexicographically, axis 0 most significant.
    std::vector<long> offset;
    std::vector<std::size_t> neighbors;  // composite ids in the other partition
    std::vector<std::size_t> shared;     // shared basic cell, parallel to neighbors
};

struct Adjacency {
    std::size_t first;
    std::size_t second;
    int axis;
    double face;  // (d-1)-dimensional measure of the common face, 1 for d = 1
};

class PartitionLayout {
public:
    PartitionLayout(int d, int n);

    int dim() const { return d_; }
    int n() const { return n_; }
    std::size_t basic_count() const { return basic_count_; }

    std::vector<int> basic_multi_index(std::size_t flat) const;
    std::size_t basic_flat(std::span<const int> multi) const;
    std::vector<double> basic_center(std::size_t flat) const;
    std::vector<double> basic_lower(std::size_t flat) const;

    const std::vector<CompositeCell>& composites(Phase p) const {
        return p == Phase::A ? comp_a_ : comp_b_;
    }
    const CompositeCell& composite(Phase p, std::size_t j) const { return composites(p)[j]; }
    std::size_t composite_of_basic(std::size_t basic, Phase p) const {
        return p == Phase::A ? basic_to_a_[basic] : basic_to_b_[basic];
    }
    // Composite cell containing x; ties on shared faces go to the lexicographically smallest cell.
    std::size_t composite_of(std::span<const double> x, Phase p) const;
    // Basic cell containing x, same tie convention.
    std::size_t basic_of(std::span<const double> x) const;

    const std::vector<Adjacency>& adjacent_pairs(Phase p) const {
        return p == Phase::A ? adj_a_ : adj_b_;
    }

    std::size_t sign_count() const { return std::size_t{1} << d_; }
    std::vector<int> sign_vector(std::size_t beta) const;

private:
    void build(Phase p);

    int d_;
    int n_;
    std::size_t basic_count_;
    std::vector<CompositeCell> comp_a_, comp_b_;
    std::vector<std::size_t> basic_to_a_, basic_to_b_;
    std::vector<Adjacency> adj_a_, adj_b_;
};

}  // namespace domdec
