#include <cmath>
#include <cstdio>
#include <iostream>
#include <random>

#include "CLI11.hpp"
#include "domdec/cell_solver.hpp"
#include "domdec/io.hpp"
#include "domdec/scenario.hpp"
#include "json.hpp"

using namespace domdec;

namespace {

void print_check(const Check& c, const std::string& scope) {
    const char* status = c.passed ? "PASS" : (c.asserted ? "FAIL" : "NOTE");
    std::printf("%s %-32s %-10s lhs=%s rhs=%s%s%s\n", status, c.name.c_str(), scope.c_str(), format_double(c.lhs).c_str(),
                format_double(c.rhs).c_str(), c.detail.empty() ? "" : "  ", c.detail.c_str());
}

// Random small cell problems: exact plans must be feasible and no worse than the product plan or
// the entropic plan. The seed only affects these instances.
bool random_solver_check(unsigned seed, int count) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> size(1, 6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    bool ok = true;
    for (int t = 0; t < count; ++t) {
        CellProblem p;
        p.rows = static_cast<std::size_t>(size(rng));
        p.cols = static_cast<std::size_t>(size(rng));
        p.mu.resize(p.rows);
        p.nu.resize(p.cols);
        double ma = 0.0, mb = 0.0;
        for (auto& v : p.mu) ma += (v = 0.1 + u(rng));
        for (auto& v : p.nu) mb += (v = 0.1 + u(rng));
        for (auto& v : p.nu) v *= ma / mb;
        p.cost.resize(p.rows * p.cols);
        for (auto& c : p.cost) c = u(rng);
        const Plan exact = solve_exact(p);
        p.eps = 0.05;
        const Plan ent = solve_entropic(p);
        Plan prod(p.rows, p.cols);
        for (std::size_t i = 0; i < p.rows; ++i)
            for (std::size_t j = 0; j < p.cols; ++j) prod(i, j) = p.mu[i] * p.nu[j] / ma;
        const double ce = transport_cost(p, exact);
        const bool good = marginal_error(p, exact) <= 1e-12 * (1.0 + ma) && ce <= transport_cost(p, prod) + 1e-12 &&
                          ce <= transport_cost(p, ent) + 1e-12;
        if (!good) {
            std::printf("FAIL random cell problem %d (%zux%zu)\n", t, p.rows, p.cols);
            ok = false;
        }
    }
    std::printf("%s random_cell_problems      seed=%u count=%d\n", ok ? "PASS" : "FAIL", seed, count);
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Domain decomposition for optimal transport on staggered cube partitions"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::vector<int> ns;
    unsigned seed = 0;
    bool seed_given = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "scenario config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
        sub->add_option("--n", ns, "scales, comma separated")->delimiter(',');
    };

    auto* run_cmd = app.add_subcommand("run", "execute a scenario suite and write the report bundle");
    add_common(run_cmd);
    auto* check_cmd = app.add_subcommand("check", "run a suite and report every invariant check");
    add_common(check_cmd);
    check_cmd->add_option("--seed", seed, "seed for randomized solver instances")->each([&](const std::string&) {
        seed_given = true;
    });
    auto* fiber_cmd = app.add_subcommand("fiber", "fiber-problem verification at one (t, x)");
    add_common(fiber_cmd);
    double t = 0.5;
    std::vector<double> x;
    fiber_cmd->add_option("--t", t, "time")->required();
    fiber_cmd->add_option("--x", x, "point in [0,1]^d, comma separated")->required()->delimiter(',');

    CLI11_PARSE(app, argc, argv);

    try {
        ScenarioConfig cfg = load_config(config_path);
        if (!ns.empty()) cfg.ns = ns;
        if (!out_dir.empty()) cfg.output_dir = out_dir;

        if (fiber_cmd->parsed()) {
            cfg.fiber_samples = {{t, x}};
            cfg.ce_residual = false;
            cfg.wtv = false;
            validate(cfg);
            nlohmann::ordered_json reports = nlohmann::ordered_json::array();
            bool ok = true;
            for (int n : cfg.ns) {
                const auto a = analyze_run(build_scenario(cfg, n));
                for (const auto& r : a.fibers) {
                    nlohmann::ordered_json j;
                    j["n"] = r.n;
                    j["k"] = r.k;
                    j["phase"] = std::string(to_string(r.phase));
                    j["cell"] = r.cell;
                    j["eps"] = r.eps;
                    j["engine_objective"] = r.engine_objective;
                    j["direct_objective"] = r.direct_objective;
                    j["objective_gap"] = r.objective_gap;
                    j["plan_tv"] = r.plan_tv;
                    j["momentum_gap"] = r.momentum_gap;
                    j["passed"] = r.passed;
                    reports.push_back(j);
                    ok = ok && r.passed;
                }
            }
            std::cout << reports.dump(2) << '\n';
            return ok ? 0 : 1;
        }

        const SuiteResult res = run_suite(cfg, cfg.output_dir);
        if (check_cmd->parsed()) {
            for (const auto& r : res.runs)
                for (const auto& c : r.checks) print_check(c, "n=" + std::to_string(r.n));
            for (const auto& c : res.checks) print_check(c, "suite");
            bool ok = res.ok();
            if (seed_given) ok = random_solver_check(seed, 50) && ok;
            std::printf("%s\n", ok ? "OK" : "FAILED");
            return ok ? 0 : 1;
        }
        for (const auto& r : res.runs)
            std::printf("n=%d iterations=%ld objective=%s%s\n", r.n, r.record.last_k,
                        format_double(r.rows.back().rec.objective).c_str(),
                        r.record.fixed_point ? (" fixed_point=" + std::to_string(*r.record.fixed_point)).c_str() : "");
        std::printf("wrote %zu files to %s (%s)\n", res.files.size(), cfg.output_dir.c_str(),
                    res.ok() ? "all asserted checks passed" : "asserted checks failed");
        return res.ok() ? 0 : 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
