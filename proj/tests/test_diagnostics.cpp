#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "support/helpers.hpp"
#include "wb2flow/diagnostics.hpp"
#include "wb2flow/io.hpp"

#include <cmath>
#include <cstdlib>

using namespace wb2flow;
using namespace testsupport;

namespace {

// Trajectory from given densities; costs and energies recomputed.
JkoTrajectory manual(const EnergyFunctional& e, std::vector<DiscreteMeasure> steps, double tau, double tol = 1e-10)
{
    JkoTrajectory t;
    t.tau = tau;
    t.inner_tol = tol;
    t.model = TransportModel::PiecewiseConstant;
    for (size_t k = 0; k < steps.size(); ++k) {
        t.step_energies.push_back(evaluate_energy(e, steps[k]));
        if (k > 0) {
            t.step_costs.push_back(wb2_squared(steps[k - 1], steps[k], t.model));
            t.certificates.push_back({});
        }
    }
    t.steps = std::move(steps);
    return t;
}

JkoTrajectory desk_run(const EnergyFunctional& e, int n = 32, double tau = 1e-3, int steps = 20)
{
    JkoConfig c;
    c.tau = tau;
    c.n_steps = steps;
    return run_scheme(e, from_function(unit_grid(n), sin_desk), c);
}

std::function<double(const Point&)> bump_at(double c, double w = 0.1)
{
    return [c, w](const Point& p) {
        const double s = (p[0] - c) / w;
        return std::max(0.0, 1.0 - s * s);
    };
}

}  // namespace

TEST_CASE("band radius")
{
    const auto e = EnergyFunctional::power(2.0, 1.0);
    CHECK(radius_star(e, 0.02) == doctest::Approx(std::sqrt(0.08)).epsilon(1e-14));
    CHECK(std::abs(radius_star(e, 0.02) - 0.28284) < 1e-5);
    CHECK(radius_star(e, 0.08) == doctest::Approx(2.0 * radius_star(e, 0.02)).epsilon(1e-14));
}

TEST_CASE("desk run passes every applicable check")
{
    const auto e = EnergyFunctional::power(2.0, 1.0);
    const auto traj = desk_run(e);
    const auto rep = run_diagnostics(e, traj);
    CHECK(rep.records.size() == 10);
    for (const auto& r : rep.records) {
        INFO(r.name << " lhs=" << r.lhs << " rhs=" << r.rhs << " " << r.detail);
        CHECK(!r.anchor.empty());
        if (!r.skipped) CHECK(r.pass);
        if (!r.skipped && r.name != "boundary_band" && r.name != "envelopes")
            CHECK(r.pass == (r.lhs <= r.rhs + r.slack));
    }
    CHECK(rep.all_pass());
    CHECK(!rep.find("metric_derivative_bound")->skipped);
}

TEST_CASE("constant trajectory is trivially fine")
{
    const auto e = EnergyFunctional::power(2.0, 1.0);
    const auto traj = manual(e, std::vector<DiscreteMeasure>(4, constant(unit_grid(16), 1.0)), 1e-3);
    const auto rep = run_diagnostics(e, traj);
    CHECK(rep.all_pass());
    CHECK(rep.find("step_sum")->lhs == 0.0);
    CHECK(rep.find("step_sum")->rhs == 0.0);
    CHECK(rep.find("edi")->lhs == doctest::Approx(rep.find("edi")->rhs).epsilon(1e-14));
    CHECK(rep.find("holder")->lhs == 0.0);
}

TEST_CASE("speed profile")
{
    const auto e = EnergyFunctional::power(2.0, 1.0);
    const auto traj = desk_run(e, 16, 1e-3, 5);
    const auto sp = speed_profile(e, traj);
    REQUIRE(sp.theta.size() == 5);
    for (int k = 0; k < 5; ++k) {
        CHECK(sp.theta[k] >= 0.0);
        CHECK(sp.theta[k] == doctest::Approx(std::sqrt(traj.step_costs[k]) / traj.tau).epsilon(1e-12));
        CHECK(sp.v_norm[k] == slope_lower_bound(e, traj.steps[k + 1]));
    }
    CHECK(sp.energies == traj.step_energies);
}

TEST_CASE("negative controls")
{
    auto g = unit_grid(32);
    const auto e1 = EnergyFunctional::power(2.0, 1.0);
    const auto e0 = EnergyFunctional::power(2.0, 0.0);

    SUBCASE("energy increase")
    {
        auto up = from_function(g, sin_desk);
        up.density.array() += 0.5;
        CHECK(!check_energy_monotone(manual(e1, {from_function(g, sin_desk), up}, 1e-3)).pass);
    }
    SUBCASE("minimizer replaced by a shifted copy of the previous step")
    {
        // same energy, positive cost: every dissipation inequality breaks
        auto traj = manual(e0, {from_function(g, bump_at(0.3)), from_function(g, bump_at(0.7))}, 1e-4);
        CHECK(traj.step_energies[0] == doctest::Approx(traj.step_energies[1]));
        const auto rep = run_diagnostics(e0, traj);
        for (const char* n : {"step_sum", "refined_step_sum", "holder", "edi"}) {
            INFO(n);
            CHECK(!rep.find(n)->skipped);
            CHECK(!rep.find(n)->pass);
        }
        CHECK(!rep.all_pass());
    }
    SUBCASE("zero in the boundary band")
    {
        auto mu = constant(g, 1.0);
        auto hole = mu;
        hole.density[0] = 0.0;
        auto r = check_boundary_band(e1, manual(e1, {mu, hole}, 0.02));
        CHECK(!r.skipped);
        CHECK(!r.pass);
        CHECK(check_boundary_band(e0, manual(e0, {mu, mu}, 0.02)).skipped);
    }
    SUBCASE("inflated density near the boundary")
    {
        auto mu = constant(g, 1.0);
        auto big = mu;
        big.density[0] = 50.0;
        CHECK(!check_envelopes(e1, manual(e1, {mu, big}, 0.02)).pass);
        auto b0 = from_function(g, bump_at(0.5));
        auto b1 = b0;
        b1.density[0] = 100.0;  // the upper envelope at the first cell is about 35 here
        CHECK(!check_envelopes(e0, manual(e0, {b0, b1}, 1e-3)).pass);
    }
    SUBCASE("standing still with positive slope")
    {
        auto wave = from_function(g, [](const Point& p) { return 1.0 + 0.9 * std::sin(6.0 * M_PI * p[0]); });
        auto traj = manual(e1, {wave, wave}, 1e-3);
        auto r = check_metric_derivative_bound(e1, traj, speed_profile(e1, traj), discretization_allowance(traj, 1.0));
        CHECK(!r.skipped);
        CHECK(!r.pass);
        auto r0 = check_zero_lambda_speed(e0, manual(e0, {from_function(g, bump_at(0.5, 0.3)), from_function(g, bump_at(0.5, 0.3))}, 1e-3), 1e-3);
        CHECK(!r0.skipped);
        CHECK(!r0.pass);
    }
    SUBCASE("moving with zero slope")
    {
        auto traj = manual(e1, {constant(g, 1.5), constant(g, 1.0)}, 1e-3);
        auto r = check_metric_derivative_converse(traj, speed_profile(e1, traj));
        CHECK(!r.skipped);
        CHECK(!r.pass);
    }
    SUBCASE("mass above the a priori bound")
    {
        auto mu = constant(g, 1.0);
        CHECK(!check_mass_bounds(e1, manual(e1, {mu, constant(g, 40.0)}, 1e-3)).pass);
        CHECK(check_mass_bounds(e1, manual(e1, {mu, mu}, 1e-3)).pass);
    }
    SUBCASE("frozen trajectory against the oracle")
    {
        auto mu = from_function(g, sin_desk);
        OracleConfig oc;
        oc.grid = g;
        oc.energy = e1;
        oc.t_end = 0.02;
        oc.output_times = {0.02};
        const auto oracle = oracle_solve(oc, mu);
        auto frozen = manual(e1, std::vector<DiscreteMeasure>(21, mu), 1e-3);
        CHECK(!compare_to_oracle(frozen, oracle, {0.02}, 1e-3).pass);
        CHECK(compare_to_oracle(desk_run(e1, 32, 1e-3, 20), oracle, {0.02}, 5e-2).pass);
    }
    SUBCASE("weak residual that grows as tau shrinks")
    {
        auto a = desk_run(e1, 32, 4e-3, 5), b = desk_run(e1, 32, 1e-3, 20);
        auto frozen = manual(e1, std::vector<DiscreteMeasure>(81, from_function(g, sin_desk)), 2.5e-4);
        auto basket = bump_basket(1);
        CHECK(!check_weak_solution_rate(e1, {&a, &b, &frozen}, basket, 0.0, 0.02).pass);
    }
}

TEST_CASE("reports are byte-identical across repeats and worker counts")
{
    const auto e = EnergyFunctional::power(2.0, 1.0);
    const auto traj = desk_run(e, 16, 1e-3, 8);
    setenv("WB2FLOW_THREADS", "1", 1);
    CHECK(thread_budget() == 1);
    const auto a = run_diagnostics(e, traj);
    setenv("WB2FLOW_THREADS", "4", 1);
    const auto b = run_diagnostics(e, traj);
    unsetenv("WB2FLOW_THREADS");
    const auto c = run_diagnostics(e, traj);
    CHECK(report_json(a) == report_json(b));
    CHECK(report_json(a) == report_json(c));
    CHECK(report_csv(a) == report_csv(b));
}

TEST_CASE("check selection")
{
    const auto e = EnergyFunctional::power(2.0, 1.0);
    const auto traj = desk_run(e, 16, 1e-3, 3);
    DiagnosticsOptions opt;
    opt.checks = {"holder", "step_sum"};
    const auto rep = run_diagnostics(e, traj, opt);
    REQUIRE(rep.records.size() == 2);
    CHECK(rep.records[0].name == "holder");
    opt.checks = {"nonsense"};
    CHECK_THROWS_AS(run_diagnostics(e, traj, opt), std::invalid_argument);
}

TEST_CASE("refinement shrinks the envelope violation")
{
    const auto e = EnergyFunctional::power(2.0, 0.0);
    double prev = 1e300;
    for (int n : {32, 64}) {
        JkoConfig c;
        c.tau = 1e-3;
        c.n_steps = 5;
        const auto traj = run_scheme(e, from_function(unit_grid(n), bump_at(0.5, 0.3)), c);
        const double v = envelope_violation(e, traj);
        CHECK(v <= prev);
        prev = v;
    }
}
