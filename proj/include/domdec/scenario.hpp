#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "domdec/cost.hpp"
#include "domdec/diagnostics.hpp"
#include "domdec/engine.hpp"
#include "domdec/fiber.hpp"
#include "domdec/measure.hpp"

namespace domdec {

inline constexpr int kSchemaVersion = 1;

enum class ScenarioKind { Flipped, Bottleneck, Product, Semidiscrete, Hessian, WtvbGrowth, Custom };

std::string to_string(ScenarioKind k);
ScenarioKind scenario_kind_from_string(const std::string& s);

struct FiberSample {
    double t = 0.5;
    std::vector<double> x;
};

struct ScenarioConfig {
    int schema_version = kSchemaVersion;
    std::string name;
    ScenarioKind kind = ScenarioKind::Flipped;
    int d = 1;
    std::vector<int> ns{16};
    double horizon = 1.0;
    EpsSchedule eps;
    CostKind cost = CostKind::Quadratic;
    double perturbation = 0.0;

    SigmaScheme scheme = SigmaScheme::DiracCenters;
    int quadrature_order = 4;
    int subgrid = 2;

    // mu density: dip to (1 - depth) x base over the middle `width` of axis 0 (bottleneck)
    double dip_depth = 0.8;
    double dip_width = 0.1;
    // discretized Lebesgue targets: points per axis, 0 matches the X atoms
    int y_per_axis = 0;

    double interface_angle = 0.35;  // semidiscrete: tilt of the initial interface from vertical
    double theta = 0.39269908169872414;  // hessian: pi / 8
    double alpha = 0.3;

    // custom: explicit nu; only the product initialization is supported
    std::vector<std::vector<double>> custom_y;
    std::vector<double> custom_y_weights;
    std::string custom_init = "product";

    // diagnostics
    bool wtv = true;
    bool ce_residual = true;
    double ce_cutoff = 0.0;  // 0: use the horizon
    bool snapshots = false;
    std::vector<FiberSample> fiber_samples;

    bool stop_at_fixed_point = true;
    unsigned threads = 1;
    double solver_tol = 1e-9;
    std::string output_dir = "out";
};

ScenarioConfig parse_config(const std::string& json_text);
ScenarioConfig load_config(const std::filesystem::path& path);
// Throws std::invalid_argument with a message naming the offending key.
void validate(const ScenarioConfig& cfg);

// Discretization of a density on the basic cells of the layout. atom_cell receives the basic cell of
// every atom; atoms are ordered by basic cell.
DiscreteMeasure discretize(const DensitySpec& density, const PartitionLayout& layout, SigmaScheme scheme,
                           int quadrature_order, int subgrid, std::vector<std::size_t>& atom_cell);

struct Scenario {
    ScenarioConfig cfg;
    int n = 0;
    DensitySpec density;
    bool lebesgue_mu = false;  // mu is the uniform density on [0,1]^d
    double diam_y = 0.0;
    RunState init;
};

Scenario build_scenario(const ScenarioConfig& cfg, int n);

// S(x) = H x with H = R_theta^T diag(-tan^2 alpha, 1) R_theta.
std::vector<double> hessian_matrix(double theta, double alpha);
// Smallest (x1 - x2)^T H (x1 - x2) over atom pairs sharing a composite cell of either partition.
double hessian_admissibility_margin(const Scenario& s);

struct DiagnosticsRow {
    IterationRecord rec;
    double wtv = 0.0;
    double wtvb = 0.0;
    double w_step = 0.0;  // W(pi_{k/n}, pi_{(k+1)/n}); 0 on the last row
    double mass_defect = 0.0;
    BoundCheck wtv_bound;
    BoundCheck equicontinuity;
    BoundCheck wtvb_bound;
    BoundCheck mass_balance;
    double momentum_excess = 0.0;  // max over atoms of |omega_l| - rho
    double neighbor_form_gap = 0.0;
};

struct Check {
    std::string name;
    bool asserted = true;
    bool passed = true;
    double lhs = 0.0;  // worst observed value
    double rhs = 0.0;
    std::string detail;
};

struct NamedResidual {
    std::string test_function;  // "sin_cos" or "sin_sin"
    ResidualTerms terms;
};

// Residuals below this are rounding noise of an identically vanishing integral.
inline constexpr double kResidualFloor = 1e-12;

struct RunAnalysis {
    int n = 0;
    RunRecord record;
    std::vector<DiagnosticsRow> rows;
    double wtv_init = 0.0;
    std::vector<NamedResidual> residuals;
    std::vector<FiberReport> fibers;
    std::vector<Check> checks;
    double lp_optimum = 0.0;  // hessian only
    double init_cost = 0.0;
};

struct RunOptions {
    bool keep_iterates = false;
};

RunAnalysis analyze_run(const Scenario& s, const RunOptions& opts = {});

struct GammaSample {
    FiberSample sample;
    std::vector<int> ns;
    std::vector<double> discrete_min;
    double limit_min = 0.0;
    bool passed = false;
};

struct SuiteResult {
    std::vector<RunAnalysis> runs;
    std::vector<GammaSample> gamma;
    std::vector<Check> checks;  // suite-level
    std::vector<std::string> files;  // written, relative to the output directory
    bool ok() const;
};

// Runs every n, writes run_n{n}.csv, ce_residual.csv, fiber_report.json, summary.json, optional
// snapshots/ and manifest.json (written last, covering every other file).
SuiteResult run_suite(const ScenarioConfig& cfg, const std::filesystem::path& out);

std::string sha256_hex(const std::string& bytes);

}  // namespace domdec
