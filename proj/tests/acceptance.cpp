// Acceptance gate: one PASS/FAIL line per criterion.
#include "support/dense_simplex.hpp"
#include "support/helpers.hpp"
#include "wb2flow/diagnostics.hpp"
#include "wb2flow/expression.hpp"

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <random>
#include <string>

using namespace wb2flow;
using namespace testsupport;

namespace {

int failures = 0;

struct Clock {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

void report(int id, bool pass, const Clock& c, const char* fmt, ...)
{
    char buf[1024];
    va_list ap;
    va_start(ap, fmt);
    std::vsnprintf(buf, sizeof buf, fmt, ap);
    va_end(ap);
    std::printf("%s  %2d  %s  [%.1f s]\n", pass ? "PASS" : "FAIL", id, buf, c.seconds());
    std::fflush(stdout);
    if (!pass) ++failures;
}

void note(const char* fmt, ...)
{
    va_list ap;
    va_start(ap, fmt);
    std::printf("          ");
    std::vprintf(fmt, ap);
    std::printf("\n");
    va_end(ap);
}

double sin_rho0(const Point& p) { return 1.0 + 0.5 * std::sin(2.0 * M_PI * p[0]); }

JkoTrajectory run(const EnergyFunctional& e, int n, double tau, int steps, double tol = 0.0,
                  std::function<double(const Point&)> rho0 = sin_rho0)
{
    JkoConfig c;
    c.tau = tau;
    c.n_steps = steps;
    c.inner_tol = tol;
    return run_scheme(e, from_function(unit_grid(n), rho0), c);
}

OracleRun oracle(const EnergyFunctional& e, int n, double t)
{
    OracleConfig oc;
    oc.grid = unit_grid(n);
    oc.energy = e;
    oc.t_end = t;
    oc.output_times = {t};
    return oracle_solve(oc, from_function(oc.grid, sin_rho0));
}

double relative_l1(const DiscreteMeasure& coarse, const DiscreteMeasure& fine)
{
    return nested_l1(coarse, fine) / (fine.density.cwiseAbs().sum() * fine.grid->cell_volume);
}

bool all_converged(const JkoTrajectory& t)
{
    for (const auto& c : t.certificates)
        if (!c.converged) return false;
    return true;
}

AtomList atoms(std::initializer_list<std::pair<double, double>> list)
{
    AtomList a;
    a.positions.resize(static_cast<int>(list.size()), 1);
    a.masses.resize(static_cast<int>(list.size()));
    int i = 0;
    for (auto [x, m] : list) {
        a.positions(i, 0) = x;
        a.masses[i++] = m;
    }
    return a;
}

double reference_lp(const TransportProblem& p)
{
    const int m = p.source.size(), k = p.target.size();
    const int nv = m * k + m + k;
    std::vector<std::vector<double>> A(m + k, std::vector<double>(nv, 0.0));
    std::vector<double> b(m + k), c(nv);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < k; ++j) {
            A[i][i * k + j] = 1.0;
            A[m + j][i * k + j] = 1.0;
            c[i * k + j] = p.cost(i, j);
        }
        A[i][m * k + i] = 1.0;
        c[m * k + i] = p.source_to_reservoir(i);
        b[i] = p.source.masses[i];
    }
    for (int j = 0; j < k; ++j) {
        A[m + j][m * k + m + j] = 1.0;
        c[m * k + m + j] = p.reservoir_to_target(j);
        b[m + j] = p.target.masses[j];
    }
    return DenseSimplex(A, b, c).solve().value;
}

// Energy nonincreasing and the telescoped step sum.
bool dissipation(const JkoTrajectory& t, double* worst_rise, double* sum_margin)
{
    *worst_rise = -kInfinity;
    for (int k = 1; k <= t.n_steps(); ++k)
        *worst_rise = std::max(*worst_rise, t.step_energies[k] - t.step_energies[k - 1]);
    double sum = 0.0;
    for (double c : t.step_costs) sum += c / (2.0 * t.tau);
    const double rhs = t.step_energies.front() - t.step_energies.back() + t.n_steps() * t.inner_tol;
    *sum_margin = rhs - sum;
    return *worst_rise <= 0.0 && sum <= rhs;
}

bool fixed_point(const EnergyFunctional& e, double* dev, double* cost)
{
    JkoConfig c;
    c.tau = 1e-3;
    c.n_steps = 20;
    const auto t = run_scheme(e, constant(unit_grid(32), e.lambda), c);
    *dev = 0.0;
    *cost = 0.0;
    for (const auto& s : t.steps) *dev = std::max(*dev, (s.density.array() - e.lambda).abs().maxCoeff());
    for (double s : t.step_costs) *cost = std::max(*cost, s);
    return *dev <= 1e-6 && *cost <= 1e-10;
}

void c1()
{
    Clock c;
    auto p1 = TransportProblem{};
    p1.domain = Box::unit(1);
    p1.source = atoms({{0.1, 1.0}});
    p1.target = atoms({{0.9, 1.0}});
    auto p2 = p1;
    p2.source = atoms({{0.1, 0.5}, {0.9, 0.5}});
    p2.target = atoms({{0.1, 0.5}, {0.9, 0.25}});
    const double a = solve_exact(p1).cost, b = solve_exact(p2).cost;
    const bool ok = std::abs(a - 0.02) <= 1e-12 && std::abs(b - 0.0025) <= 1e-12 && c.seconds() < 1.0;
    report(1, ok, c, "Wb2 exactness: %.17g (0.02), %.17g (0.0025), tol 1e-12, < 1 s", a, b);
}

void c2()
{
    Clock c;
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> nd(2, 10);
    double worst = 0.0;
    for (int k = 0; k < 200; ++k) {
        const int dim = k % 4 == 3 ? 2 : 1;
        auto g = unit_grid(dim == 1 ? nd(rng) : 3, dim);
        auto a = random_measure(g, rng), b = random_measure(g, rng);
        if (a.total_mass() == 0.0) a.density[0] = 1.0;
        auto p = TransportProblem::from_measures(a, b);
        const double ref = reference_lp(p), got = solve_exact(p).cost;
        worst = std::max(worst, std::abs(got - ref) / std::max(std::abs(ref), 1e-300));
    }
    report(2, worst <= 1e-9 && c.seconds() < 30.0, c, "LP oracle: 200 problems, worst relative error %.3g (<= 1e-9), < 30 s",
           worst);
}

void c3()
{
    Clock c;
    std::mt19937_64 rng(3);
    auto g = unit_grid(12);
    double sym = 0.0, tri = -kInfinity;
    for (int k = 0; k < 100; ++k) {
        auto a = random_measure(g, rng), b = random_measure(g, rng), d = random_measure(g, rng);
        const double ab = wb2_distance(a, b), ba = wb2_distance(b, a), bd = wb2_distance(b, d), ad = wb2_distance(a, d);
        sym = std::max(sym, std::abs(ab - ba));
        tri = std::max(tri, ad - ab - bd);
    }
    report(3, sym <= 1e-8 && tri <= 1e-8, c, "metric axioms: 100 triples n=12, max asymmetry %.3g, max triangle excess %.3g (<= 1e-8)",
           sym, tri);
}

void c4()
{
    Clock c;
    double dev, cost;
    const bool ok = fixed_point(EnergyFunctional::power(2.0, 1.0), &dev, &cost);
    report(4, ok, c, "fixed point: max |rho - lambda| %.3g (<= 1e-6), max step cost %.3g (<= 1e-10)", dev, cost);
}

void c5_6(const JkoTrajectory& desk, double seconds)
{
    Clock c;
    double rise, margin;
    const bool ok = dissipation(desk, &rise, &margin) && all_converged(desk) && seconds < 300.0;
    report(5, ok, c, "energy monotone and step sum: worst rise %.3g (<= 0), step-sum margin %.3g (>= 0), run %.1f s",
           rise, margin, seconds);

    Clock c6;
    const double E0 = desk.step_energies.front();
    double worst = -kInfinity;
    for (int i = 0; i <= desk.n_steps(); ++i)
        for (int j = i + 1; j <= desk.n_steps(); ++j) {
            const double lhs = wb2_distance(desk.steps[i], desk.steps[j], desk.model);
            worst = std::max(worst, lhs - std::sqrt(2.0 * E0 * ((j - i) * desk.tau + desk.tau)));
        }
    report(6, worst <= 1e-9, c6, "Hoelder bound: all %d pairs, worst excess %.3g (<= 1e-9)",
           desk.n_steps() * (desk.n_steps() + 1) / 2, worst);
}

void c7()
{
    Clock c;
    const auto e = EnergyFunctional::power(2.0, 1.0);
    const int n = 64;
    auto g = unit_grid(n);
    auto rho0 = [](const Point& p) { return std::min(p[0], 1.0 - p[0]) < 0.3 ? 0.0 : 1.0; };
    JkoConfig cfg;
    cfg.tau = 0.02;
    cfg.n_steps = 1;
    const auto t = run_scheme(e, from_function(g, rho0), cfg);
    const auto r = check_boundary_band(e, t, 1);
    const double rstar = radius_star(e, 0.02);
    const bool ok = !r.skipped && r.pass && std::abs(rstar - 0.28284) < 1e-5 && all_converged(t);
    report(7, ok, c, "boundary positivity: r* = %.6f, %s", rstar, r.detail.c_str());
}

void c8()
{
    Clock c;
    bool ok = true;
    std::string msg;
    for (double lambda : {0.0, 1.0}) {
        const auto e = EnergyFunctional::power(2.0, lambda);
        double v[2];
        for (int k = 0; k < 2; ++k) {
            const auto t = run(e, k == 0 ? 32 : 64, 1e-3, 50);
            const auto r = check_envelopes(e, t);
            ok = ok && !r.skipped && r.pass;
            v[k] = envelope_violation(e, t);
            char buf[160];
            std::snprintf(buf, sizeof buf, " lambda=%g n=%d %s;", lambda, k == 0 ? 32 : 64, r.pass ? "ok" : "violated");
            msg += buf;
        }
        ok = ok && v[1] <= 0.5 * v[0];
        char buf[160];
        std::snprintf(buf, sizeof buf, " raw violation %.3g -> %.3g;", v[0], v[1]);
        msg += buf;
    }
    report(8, ok, c, "envelopes:%s", msg.c_str());
}

void c9()
{
    Clock c;
    const auto e = EnergyFunctional::power(2.0, 1.0);
    auto mu0 = from_function(unit_grid(32), sin_rho0);
    const auto basket = bump_basket(1);
    std::vector<double> res, cc, quad;
    for (double tol : {1e-6, 1e-8, 1e-10}) {
        JkoConfig cfg;
        cfg.tau = 1e-3;
        cfg.inner_tol = tol;
        const auto s = jko_step(e, mu0, resolve(cfg, e, mu0));
        double r = 0.0, a = 0.0, q = 0.0;
        for (const auto& z : basket) {
            r = std::max(r, el_residual(e, mu0, s.measure, 1e-3, z, TransportModel::PiecewiseConstant));
            a = std::max(a, el_residual(e, mu0, s.measure, 1e-3, z, TransportModel::CellCenters));
            q = std::max(q, quadrature_el_residual(e, mu0, s.measure, 1e-3, z));
        }
        res.push_back(r);
        cc.push_back(a);
        quad.push_back(q);
    }
    const bool ok = res[1] < res[0] && res[2] < res[1];
    report(9, ok, c, "EL residual vs inner_tol 1e-6/1e-8/1e-10: %.3g > %.3g > %.3g", res[0], res[1], res[2]);
    note("cell-centre plan form: %.3g %.3g %.3g; mass-quadrature form: %.3g %.3g %.3g", cc[0], cc[1], cc[2], quad[0],
         quad[1], quad[2]);
}

void c10()
{
    Clock c;
    const auto e = EnergyFunctional::power(2.0, 1.0);
    const double T = 0.02;
    std::vector<JkoTrajectory> runs;
    for (double tau : {4e-3, 1e-3, 2.5e-4}) runs.push_back(run(e, 64, tau, static_cast<int>(std::lround(T / tau))));
    const auto r = check_weak_solution_rate(e, {&runs[0], &runs[1], &runs[2]}, bump_basket(1), 0.0, T);
    report(10, r.pass, c, "weak-solution rate: %s", r.detail.c_str());
}

bool agreement(int id, const char* label, const EnergyFunctional& e, double tol)
{
    Clock c;
    const double T = 0.05;
    const auto ref = oracle(e, 256, T).solutions.back();
    std::vector<double> err;
    bool conv = true;
    for (auto [n, tau] : {std::pair{16, 4e-3}, std::pair{32, 1e-3}, std::pair{64, 2.5e-4}}) {
        const auto t = run(e, n, tau, static_cast<int>(std::lround(T / tau)));
        conv = conv && all_converged(t);
        err.push_back(relative_l1(sample_at(t, T), ref));
    }
    const bool ok = err[2] <= tol && err[1] < err[0] && err[2] < err[1] && conv;
    if (id > 0)
        report(id, ok, c, "%s: relative L1 at t=0.05 %.3g (<= %g); refinement %.3g > %.3g > %.3g", label, err[2], tol,
               err[0], err[1], err[2]);
    else
        note("%s: relative L1 %.3g (<= %g), refinement %.3g > %.3g > %.3g: %s", label, err[2], tol, err[0], err[1],
             err[2], ok ? "ok" : "FAILED");
    return ok;
}

void c12(const JkoTrajectory& desk)
{
    Clock c;
    const auto e = EnergyFunctional::power(2.0, 1.0);
    const auto fine = run(e, 64, 1e-3, 50);
    DiagnosticsOptions opt;
    opt.checks = {"edi", "metric_derivative_bound"};
    const auto r32 = run_diagnostics(e, desk, opt), r64 = run_diagnostics(e, fine, opt);
    bool ok = true;
    std::string msg;
    for (const char* n : {"edi", "metric_derivative_bound"}) {
        const auto* a = r32.find(n);
        const auto* b = r64.find(n);
        ok = ok && !a->skipped && !b->skipped && a->pass && b->pass;
        ok = ok && (a->slack_used == 0.0 ? b->slack_used == 0.0 : b->slack_used < a->slack_used);
        char buf[200];
        std::snprintf(buf, sizeof buf, " %s allowance used %.3g -> %.3g (of %.3g -> %.3g);", n, a->slack_used,
                      b->slack_used, a->slack, b->slack);
        msg += buf;
    }
    JkoConfig cfg;
    cfg.tau = 1e-3;
    cfg.n_steps = 10;
    const auto flat = run_scheme(e, constant(unit_grid(32), 1.0), cfg);
    const auto conv = check_metric_derivative_converse(flat, speed_profile(e, flat));
    ok = ok && !conv.skipped && conv.pass;
    report(12, ok, c, "EDI and metric derivative:%s converse on constant run lhs %.3g", msg.c_str(), conv.lhs);
}

void c13()
{
    Clock c;
    const auto e = EnergyFunctional::entropy(1.0);
    double dev, cost, rise, margin;
    const bool fp = fixed_point(e, &dev, &cost);
    const auto desk = run(e, 32, 1e-3, 50);
    const bool diss = dissipation(desk, &rise, &margin) && all_converged(desk);
    DiagnosticsOptions opt;
    opt.checks = {"edi"};
    const auto edi = run_diagnostics(e, desk, opt).records.front();
    note("heat: fixed point dev %.3g cost %.3g; worst rise %.3g, step-sum margin %.3g; EDI lhs %.6g rhs %.6g", dev, cost,
         rise, margin, edi.lhs, edi.rhs);
    const bool orc = agreement(0, "heat oracle agreement", e, 0.05);
    report(13, fp && diss && !edi.skipped && edi.pass && orc, c, "heat variant: fixed point, dissipation, EDI, oracle");
}

void c14()
{
    Clock c;
    auto e = EnergyFunctional::power(2.0, 1.0);
    const auto v = Expression::parse("x/2", 1);
    e.potential = Potential{[v](const Point& p) { return v(p); }, [v](const Point& p) { return v.gradient(p); }, "x/2"};
    bool admissible = true;
    try {
        e.validate(Box::unit(1));
    } catch (const std::exception&) {
        admissible = false;
    }
    auto bad = e;
    const auto w = Expression::parse("4*x", 1);
    bad.potential = Potential{[w](const Point& p) { return w(p); }, [w](const Point& p) { return w.gradient(p); }, "4*x"};
    bool rejected = false;
    try {
        bad.validate(Box::unit(1));
    } catch (const std::exception&) {
        rejected = true;
    }
    note("drift: boundary law admissible for V = x/2: %s; V = 4x rejected: %s", admissible ? "yes" : "no",
         rejected ? "yes" : "no");
    const bool orc = agreement(0, "drift oracle agreement", e, 0.08);
    report(14, admissible && rejected && orc, c, "drift-diffusion variant: admissibility and oracle agreement");
}

}  // namespace

int main()
{
    c1();
    c2();
    c3();
    c4();
    Clock desk_clock;
    const auto desk = run(EnergyFunctional::power(2.0, 1.0), 32, 1e-3, 50);
    const double desk_seconds = desk_clock.seconds();
    c5_6(desk, desk_seconds);
    c7();
    c8();
    c9();
    c10();
    agreement(11, "oracle agreement", EnergyFunctional::power(2.0, 1.0), 0.05);
    c12(desk);
    c13();
    c14();
    std::printf("%d of 14 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
