#pragma once

#include <span>
#include <vector>

#include "domdec/engine.hpp"
#include "domdec/geometry.hpp"
#include "domdec/measure.hpp"

namespace domdec {

inline constexpr double kMassMismatch = 1e-9;

// W1 between two nonnegative weight vectors on the same support (|.| ground cost).
class YMetric {
public:
    explicit YMetric(SupportPtr y);
    double w1(std::span<const double> a, std::span<const double> b) const;
    const PointSet& points() const { return *y_; }

private:
    SupportPtr y_;
    std::vector<std::size_t> order_;  // sorted order for d = 1
};

double w1_y(const DiscreteMeasure& a, const DiscreteMeasure& b);
// Exact W1 between arbitrary weighted point clouds of one dimension.
double w1_points(const PointSet& pa, std::span<const double> wa, const PointSet& pb, std::span<const double> wb);
// W1 on X x Y between two couplings, (x, y) atoms with Euclidean ground cost.
double w1_joint(const Coupling& a, const Coupling& b);

std::vector<double> basic_masses(const Coupling& pi);

double vertical_metric(const Coupling& a, const Coupling& b);
// Both snapshots on the same layout; fibers compared per basic cell with weight m_i.
double vertical_metric(const TrajectorySnapshot& a, const TrajectorySnapshot& b, const PartitionLayout& layout,
                       std::span<const double> basic_mass, const YMetric& metric);
// Snapshot against a coupling on the same atoms.
double vertical_metric(const TrajectorySnapshot& a, const Coupling& b, const PartitionLayout& layout,
                       const YMetric& metric);

// The snapshot's composite-averaged plan on the atoms of the template coupling.
Coupling snapshot_coupling(const TrajectorySnapshot& s, const PartitionLayout& layout, const Coupling& tmpl);

double wtv(const TrajectorySnapshot& s, const PartitionLayout& layout, const YMetric& metric);
double wtvb(const Coupling& pi, const PartitionLayout& layout, const YMetric& metric);
double mass_balance_defect(const PartitionLayout& layout, std::span<const double> basic_mass, Phase p);

struct BoundCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds(double slack = 1e-12) const { return lhs <= rhs + slack; }
};

BoundCheck wtv_bound_check(double wtv_value, double wtvb_value, int d, double diam_y, double m_lower, double tv);
BoundCheck equicontinuity_check(double w_step, double wtvb_value, int d, int n, double diam_y, double m_lower,
                                double m_upper, double tv, double c);
BoundCheck wtvb_bound_check(double wtvb_value, double wtv_init, double diam_y);
BoundCheck mass_balance_check(double defect, int d, double m_lower, double tv);

// psi(t) prod_l sin(kx x_l) prod_l cos(ky y_l - y_phase), psi(t) = (1 - (t/T)^2)^2 on [0, T), 0 afterwards.
class TestFunction {
public:
    TestFunction(double cutoff, double kx, double ky, double y_phase = 0.0);
    static TestFunction bump_sin_cos(double cutoff);
    // sin in y: even under (x, y) -> (1 - x, 1 - y), so it does not vanish on reflection-symmetric runs
    static TestFunction bump_sin_sin(double cutoff);

    double cutoff() const { return cutoff_; }
    double psi(double t) const;
    double dpsi(double t) const;
    double psi_integral(double t) const;  // int_0^t psi
    double value(double t, std::span<const double> x, std::span<const double> y) const;
    double dt(double t, std::span<const double> x, std::span<const double> y) const;
    std::vector<double> grad_x(double t, std::span<const double> x, std::span<const double> y) const;
    double spatial(std::span<const double> x) const;
    std::vector<double> spatial_grad(std::span<const double> x) const;
    double y_factor(std::span<const double> y) const;

private:
    double cutoff_, kx_, ky_, y_phase_;
};

struct ResidualTerms {
    double time_term = 0.0;
    double momentum_term = 0.0;
    double initial_term = 0.0;
    double total() const { return time_term + momentum_term + initial_term; }
};

ResidualTerms ce_residual(const RunRecord& run, const PartitionLayout& layout, const Coupling& pi_init,
                          const TestFunction& phi);

}  // namespace domdec
