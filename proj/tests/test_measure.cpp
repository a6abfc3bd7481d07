#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "domdec/measure.hpp"
#include "oracles.hpp"

using namespace domdec;

namespace {

DiscreteMeasure line_measure(std::vector<double> x, std::vector<double> w) {
    return DiscreteMeasure(make_support(1, std::move(x)), std::move(w));
}

}  // namespace

TEST_CASE("point sets and measures") {
    CHECK_THROWS(PointSet(2, {0.0, 1.0, 2.0}));
    const PointSet p(2, {0, 0, 3, 4, 1, 1});
    CHECK(p.size() == 3);
    CHECK(p.diameter() == doctest::Approx(5.0));
    CHECK_THROWS(line_measure({0.0, 1.0}, {0.5, -0.1}));
    const auto m = normalize(line_measure({0.0, 1.0}, {1.0, 3.0}));
    CHECK(m.total_mass() == doctest::Approx(1.0));
    CHECK(m.weight(1) == doctest::Approx(0.75));
}

TEST_CASE("product coupling has the prescribed marginals") {
    const auto mu = line_measure({0.1, 0.5, 0.9}, {0.2, 0.3, 0.5});
    const auto nu = line_measure({0.0, 1.0}, {0.4, 0.6});
    const auto pi = Coupling::product(mu, nu);
    const auto xm = pi.x_marginal();
    const auto ym = pi.y_marginal();
    for (std::size_t i = 0; i < 3; ++i) CHECK(xm[i] == doctest::Approx(mu.weight(i)));
    for (std::size_t j = 0; j < 2; ++j) CHECK(ym[j] == doctest::Approx(nu.weight(j)));
    CHECK(pi.total_mass() == doctest::Approx(1.0));
    CHECK(kl_to_product(pi, mu.weights(), nu.weights()) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("KL and TV against hand values") {
    const std::vector<double> a{0.5, 0.5}, b{0.25, 0.75};
    const double expect = 0.5 * std::log(2.0) - 0.5 + 0.25 + 0.5 * std::log(0.5 / 0.75) - 0.5 + 0.75;
    CHECK(kl_divergence(a, b) == doctest::Approx(expect));
    const std::vector<double> c{1.0, 0.0}, z{0.0, 1.0};
    CHECK(std::isinf(kl_divergence(c, z)));
    CHECK(kl_divergence(a, a) == 0.0);
    // zero mass where the reference has mass only contributes the reference
    const std::vector<double> half{0.0, 0.5};
    CHECK(kl_divergence(half, a) == doctest::Approx(0.5));

    auto x = make_support(1, {0.0, 1.0});
    Coupling p(x, x, {{{0, 0.5}}, {{1, 0.5}}});
    Coupling q(x, x, {{{1, 0.5}}, {{0, 0.5}}});
    CHECK(tv_distance(p, q) == doctest::Approx(2.0));
    CHECK(tv_distance(p, p) == 0.0);
    CHECK(std::isinf(kl_divergence(p, q)));
}

TEST_CASE("cell-tagged couplings group atoms") {
    auto x = make_support(1, {0.1, 0.2, 0.7});
    auto y = make_support(1, {0.0, 1.0});
    Coupling pi(x, y, {{{0, 0.2}}, {{1, 0.3}}, {{0, 0.25}, {1, 0.25}}}, {0, 0, 1}, 2);
    CHECK(pi.atoms_in_cell(0).size() == 2);
    const auto m = marginal_y_on_basic(pi, 0);
    CHECK(m.weight(0) == doctest::Approx(0.2));
    CHECK(m.weight(1) == doctest::Approx(0.3));
    const std::size_t both[] = {0, 1};
    const auto dense = dense_y_on_basics(pi, both);
    CHECK(dense[0] == doctest::Approx(0.45));
    CHECK(dense[1] == doctest::Approx(0.55));
}

TEST_CASE("block approximation preserves marginals and obeys its bounds") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 10; ++t) {
        const int d = 1 + t % 2;
        const std::size_t nx = 5 + t % 3, ny = 4 + t % 4;
        std::vector<double> xc, yc;
        for (std::size_t i = 0; i < nx * d; ++i) xc.push_back(u(rng));
        for (std::size_t i = 0; i < ny * d; ++i) yc.push_back(u(rng));
        auto X = make_support(d, xc), Y = make_support(d, yc);
        std::vector<SparseRow> rows(nx);
        for (auto& r : rows)
            for (std::uint32_t j = 0; j < ny; ++j)
                if (u(rng) < 0.5) r.push_back({j, u(rng) / static_cast<double>(nx * ny)});
        for (auto& r : rows)
            if (r.empty()) r.push_back({0, 0.01});
        const Coupling g(X, Y, rows);
        const double L = 0.25;
        const auto B = block_approximation(g, L);
        const auto gx = g.x_marginal(), bx = B.plan.x_marginal();
        const auto gy = g.y_marginal(), by = B.plan.y_marginal();
        for (std::size_t i = 0; i < nx; ++i) CHECK(std::abs(gx[i] - bx[i]) <= 1e-12);
        for (std::size_t j = 0; j < ny; ++j) CHECK(std::abs(gy[j] - by[j]) <= 1e-12);
        const double kl = kl_to_product(B.plan, gx, gy);
        CHECK(kl <= B.entropy_bound + 1e-12);
        CHECK(B.entropy_bound == doctest::Approx(2.0 * std::log(static_cast<double>(std::max(B.x_blocks, B.y_blocks)))));
    }
}

TEST_CASE("bottleneck density: unit mass, dip ratio and variation") {
    const auto s = DensitySpec::bottleneck(0.8, 0.1);
    const double lo[] = {0.0}, hi[] = {1.0};
    CHECK(s.box_mass(lo, hi) == doctest::Approx(1.0));
    const double mid[] = {0.5}, edge[] = {0.1};
    CHECK(s.density(mid) / s.density(edge) == doctest::Approx(0.2));
    CHECK(*s.total_variation == doctest::Approx(2.0 * (s.upper - s.lower)));
    CHECK(s.satisfies_bounds());
    CHECK_THROWS(DensitySpec::bottleneck(1.0, 0.1));
    CHECK(DensitySpec::bottleneck(0.0, 0.1).kind == DensitySpec::Kind::Uniform);
}

TEST_CASE("Gauss-Legendre integrates polynomials exactly") {
    for (int order : {1, 2, 4, 7}) {
        std::vector<double> x, w;
        gauss_legendre(order, x, w);
        CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(2.0));
        for (int p = 0; p < 2 * order; ++p) {
            double s = 0.0;
            for (int i = 0; i < order; ++i) s += w[i] * std::pow(x[i], p);
            const double exact = p % 2 ? 0.0 : 2.0 / (p + 1);
            CHECK(s == doctest::Approx(exact).epsilon(1e-13));
        }
    }
}

TEST_CASE("callable box mass") {
    const auto s = DensitySpec::from_callable([](std::span<const double> x) { return 1.0 + x[0] * x[1]; }, 1.0, 2.0);
    const double lo[] = {0.0, 0.0}, hi[] = {1.0, 0.5};
    // integral of 1 + xy over [0,1]x[0,1/2] = 1/2 + 1/16
    CHECK(s.box_mass(lo, hi) == doctest::Approx(0.5 + 1.0 / 16.0));
    CHECK_FALSE(s.total_variation.has_value());
}
