#include "wb2flow/diagnostics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <thread>

namespace wb2flow {

namespace {

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

CheckRecord skipped(std::string name, std::string anchor, std::string why)
{
    CheckRecord r;
    r.name = std::move(name);
    r.anchor = std::move(anchor);
    r.skipped = true;
    r.detail = std::move(why);
    return r;
}

template <class Fn>
void parallel_for(int count, Fn&& fn)
{
    const int workers = std::min(thread_budget(), count);
    if (workers <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int i = next++; i < count; i = next++) fn(i);
        });
    for (auto& t : pool) t.join();
}

double grid_h(const JkoTrajectory& traj)
{
    return traj.steps.front().grid->h.maxCoeff();
}

}  // namespace

double radius_star(const EnergyFunctional& e, double tau)
{
    const double a = e.alpha;
    return std::sqrt(2.0 * a * std::pow(e.lambda, a - 1.0) * tau / (a - 1.0));
}

namespace {

struct Envelope {
    double lower;
    double upper;
};

Envelope envelope_at(const EnergyFunctional& e, double tau, double diam, double d)
{
    const double a = e.alpha, q = 1.0 / (a - 1.0);
    const double la = std::pow(e.lambda, a - 1.0);
    const double up = std::pow(la + 3.0 * (a - 1.0) * diam * d / (2.0 * a * tau), q);
    const double low = std::pow(std::max(la - (a - 1.0) * d * d / (2.0 * a * tau), 0.0), q);
    return {e.lambda > 0.0 ? low : 0.0, up};
}

bool envelopes_apply(const EnergyFunctional& e)
{
    return e.variant == EnergyVariant::Power && !e.potential;
}

}  // namespace

bool DiagnosticsReport::all_pass() const
{
    return std::all_of(records.begin(), records.end(), [](const CheckRecord& r) { return r.skipped || r.pass; });
}

const CheckRecord* DiagnosticsReport::find(const std::string& name) const
{
    for (const CheckRecord& r : records)
        if (r.name == name) return &r;
    return nullptr;
}

int thread_budget()
{
    if (const char* env = std::getenv("WB2FLOW_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

SpeedProfile speed_profile(const EnergyFunctional& e, const JkoTrajectory& traj)
{
    SpeedProfile sp;
    sp.energies = traj.step_energies;
    sp.theta.resize(traj.n_steps());
    sp.v_norm.resize(traj.n_steps());
    parallel_for(traj.n_steps(), [&](int k) {
        sp.theta[k] = std::sqrt(std::max(traj.step_costs[k], 0.0)) / traj.tau;
        sp.v_norm[k] = slope_lower_bound(e, traj.steps[k + 1]);
    });
    return sp;
}

double discretization_allowance(const JkoTrajectory& traj, double E0, double C_d)
{
    return C_d * (grid_h(traj) + traj.tau) * (1.0 + E0);
}

CheckRecord check_energy_monotone(const JkoTrajectory& traj)
{
    CheckRecord r;
    r.name = "energy_monotone";
    r.anchor = "one-step energy decrease E(mu_k) <= E(mu_{k-1})";
    r.slack = traj.inner_tol;
    double worst = -kInfinity;
    int at = 0;
    for (int k = 1; k <= traj.n_steps(); ++k) {
        const double inc = traj.step_energies[k] - traj.step_energies[k - 1];
        if (inc > worst) worst = inc, at = k;
    }
    r.lhs = traj.n_steps() ? traj.step_energies[at] : 0.0;
    r.rhs = traj.n_steps() ? traj.step_energies[at - 1] : 0.0;
    r.slack_used = std::max(0.0, r.lhs - r.rhs);
    r.pass = r.lhs <= r.rhs + r.slack;
    r.detail = fmt("largest increase %.3g at step %.0f", worst, at);
    return r;
}

CheckRecord check_step_sum(const JkoTrajectory& traj)
{
    CheckRecord r;
    r.name = "step_sum";
    r.anchor = "sum of Wb2^2/(2 tau) over steps m..n-1 <= E(mu_m) - E(mu_n)";
    const int N = traj.n_steps();
    std::vector<double> prefix(N + 1, 0.0);
    for (int k = 0; k < N; ++k) prefix[k + 1] = prefix[k] + traj.step_costs[k] / (2.0 * traj.tau);
    double worst = -kInfinity;
    int wm = 0, wn = 0;
    for (int m = 0; m < N; ++m)
        for (int n = m + 1; n <= N; ++n) {
            const double gap = (prefix[n] - prefix[m]) - (traj.step_energies[m] - traj.step_energies[n]);
            if (gap > worst) worst = gap, wm = m, wn = n;
        }
    if (N == 0) return skipped(r.name, r.anchor, "no steps");
    r.lhs = prefix[wn] - prefix[wm];
    r.rhs = traj.step_energies[wm] - traj.step_energies[wn];
    r.slack = N * traj.inner_tol;
    r.slack_used = std::max(0.0, r.lhs - r.rhs);
    r.pass = r.lhs <= r.rhs + r.slack;
    r.detail = fmt("worst pair m=%.0f n=%.0f", wm, wn);
    return r;
}

CheckRecord check_refined_step_sum(const EnergyFunctional& e, const JkoTrajectory& traj, double eps_disc)
{
    CheckRecord r;
    r.name = "refined_step_sum";
    r.anchor = "sum Wb2^2/(2 tau) + (tau/2) sum |grad E|^2 lower bound <= E(mu_0) - E(mu_n)";
    const SpeedProfile sp = speed_profile(e, traj);
    double lhs = 0.0;
    for (int k = 0; k < traj.n_steps(); ++k)
        lhs += traj.step_costs[k] / (2.0 * traj.tau) + 0.5 * traj.tau * sp.v_norm[k];
    r.lhs = lhs;
    r.rhs = traj.step_energies.front() - traj.step_energies.back();
    r.slack = eps_disc;
    r.slack_used = std::max(0.0, r.lhs - r.rhs);
    r.pass = r.lhs <= r.rhs + r.slack;
    return r;
}

CheckRecord check_holder(const EnergyFunctional& e, const JkoTrajectory& traj)
{
    CheckRecord r;
    r.name = "holder";
    r.anchor = "Wb2(mu(s), mu(t)) <= sqrt(2 E(mu_0) (|s-t| + tau))";
    const int N = traj.n_steps();
    // with a potential E may go negative; the bound then uses E(mu_0) - min E
    double E = traj.step_energies.front();
    if (e.potential) E -= *std::min_element(traj.step_energies.begin(), traj.step_energies.end());
    std::vector<std::pair<int, int>> pairs;
    for (int m = 0; m < N; ++m)
        for (int n = m + 1; n <= N; ++n) pairs.push_back({m, n});
    std::vector<double> dist(pairs.size());
    parallel_for(static_cast<int>(pairs.size()), [&](int i) {
        dist[i] = wb2_distance(traj.steps[pairs[i].first], traj.steps[pairs[i].second], traj.model);
    });
    double worst = -kInfinity;
    for (size_t i = 0; i < pairs.size(); ++i) {
        // mu_m and mu_n are sampled at times with |s - t| arbitrarily close to (n - m - 1) tau
        const double bound = std::sqrt(2.0 * E * (pairs[i].second - pairs[i].first) * traj.tau);
        if (dist[i] - bound > worst) {
            worst = dist[i] - bound;
            r.lhs = dist[i];
            r.rhs = bound;
            r.detail = fmt("worst pair m=%.0f n=%.0f over %.0f pairs", pairs[i].first, pairs[i].second,
                           static_cast<double>(pairs.size()));
        }
    }
    r.slack = 1e-9;
    r.slack_used = std::max(0.0, r.lhs - r.rhs);
    r.pass = r.lhs <= r.rhs + r.slack;
    return r;
}

CheckRecord check_boundary_band(const EnergyFunctional& e, const JkoTrajectory& traj, int max_steps)
{
    const std::string name = "boundary_band", anchor = "minimizer positive on the band d(x) < r*";
    if (!(e.lambda > 0.0)) return skipped(name, anchor, "lambda = 0");
    if (e.potential) return skipped(name, anchor, "potential present");
    const Grid& g = *traj.steps.front().grid;
    const BoundaryGeometry geom = boundary_geometry(g);
    const double h = g.h.maxCoeff();
    std::vector<int> band;
    double rstar = kInfinity;
    if (e.variant == EnergyVariant::Entropy) {
        for (int i = 0; i < g.num_cells(); ++i) band.push_back(i);
    } else {
        rstar = radius_star(e, traj.tau);
        band = boundary_band(geom, rstar * (1.0 - h));
    }
    if (band.empty()) return skipped(name, anchor, "no cells inside the band");
    const int last = max_steps < 0 ? traj.n_steps() : std::min(max_steps, traj.n_steps());
    CheckRecord r;
    r.name = name;
    r.anchor = anchor;
    int zeros = 0;
    double min_rho = kInfinity;
    for (int k = 1; k <= last; ++k)
        for (int i : band) {
            const double v = traj.steps[k].density[i];
            min_rho = std::min(min_rho, v);
            if (!(v > 0.0)) ++zeros;
        }
    r.lhs = zeros;
    r.rhs = 0.0;
    r.pass = zeros == 0;
    r.detail = fmt("r*=%.6g band cells=%.0f min density=%.6g", rstar, static_cast<double>(band.size()), min_rho);
    return r;
}

double envelope_violation(const EnergyFunctional& e, const JkoTrajectory& traj)
{
    if (!envelopes_apply(e)) return 0.0;
    const Grid& g = *traj.steps.front().grid;
    const BoundaryGeometry geom = boundary_geometry(g);
    const double rstar = e.lambda > 0.0 ? radius_star(e, traj.tau) : kInfinity;
    double worst = 0.0;
    for (int k = 1; k <= traj.n_steps(); ++k)
        for (int i = 0; i < g.num_cells(); ++i) {
            const double d = geom.dist[i];
            if (d >= rstar) continue;
            const Envelope env = envelope_at(e, traj.tau, geom.diam, d);
            const double v = traj.steps[k].density[i];
            worst = std::max({worst, v - env.upper, env.lower - v});
        }
    return worst;
}

CheckRecord check_envelopes(const EnergyFunctional& e, const JkoTrajectory& traj)
{
    const std::string name = "envelopes", anchor = "pointwise envelopes near the boundary";
    if (!envelopes_apply(e)) return skipped(name, anchor, "power energy without potential only");
    const Grid& g = *traj.steps.front().grid;
    const BoundaryGeometry geom = boundary_geometry(g);
    const double h = g.h.maxCoeff();
    const double rstar = e.lambda > 0.0 ? radius_star(e, traj.tau) : kInfinity;
    const double limit = e.lambda > 0.0 ? rstar * (1.0 - h) : kInfinity;
    CheckRecord r;
    r.name = name;
    r.anchor = anchor;
    double worst = -kInfinity;
    int cells = 0;
    for (int k = 1; k <= traj.n_steps(); ++k)
        for (int i = 0; i < g.num_cells(); ++i) {
            const double d = geom.dist[i];
            if (!(d < limit)) continue;
            ++cells;
            // one cell of slack: both bounds are monotone in d
            const Envelope env = envelope_at(e, traj.tau, geom.diam, d + h);
            const double v = traj.steps[k].density[i];
            if (v - env.upper > worst) worst = v - env.upper, r.lhs = v, r.rhs = env.upper;
            if (env.lower - v > worst) worst = env.lower - v, r.lhs = env.lower, r.rhs = v;
        }
    if (cells == 0) return skipped(name, anchor, "no cells inside the band");
    r.pass = worst <= 0.0;
    r.slack_used = std::max(worst, 0.0);
    r.detail = fmt("worst margin %.6g, raw violation %.6g", worst, envelope_violation(e, traj));
    return r;
}

CheckRecord check_edi(const EnergyFunctional& e, const JkoTrajectory& traj, const SpeedProfile& sp, double eps_disc)
{
    (void)e;
    CheckRecord r;
    r.name = "edi";
    r.anchor = "E(mu_0) >= E(mu(T)) + 1/2 int |mu'|^2 + 1/2 int |v|^2 dmu";
    double dissipation = 0.0;
    for (int k = 0; k < traj.n_steps(); ++k)
        dissipation += 0.5 * traj.tau * (sp.theta[k] * sp.theta[k] + sp.v_norm[k]);
    r.lhs = traj.step_energies.back() + dissipation;
    r.rhs = traj.step_energies.front();
    r.slack = eps_disc;
    r.slack_used = std::max(0.0, r.lhs - r.rhs);
    r.pass = r.lhs <= r.rhs + r.slack;
    r.detail = fmt("dissipation %.6g, energy drop %.6g", dissipation, r.rhs - traj.step_energies.back());
    return r;
}

CheckRecord check_metric_derivative_bound(const EnergyFunctional& e, const JkoTrajectory& traj,
                                          const SpeedProfile& sp, double eps_disc)
{
    const std::string name = "metric_derivative_bound", anchor = "|mu'|(t) >= |v(t)| where inf rho > 0";
    if (!(e.lambda > 0.0)) return skipped(name, anchor, "lambda = 0");
    CheckRecord r;
    r.name = name;
    r.anchor = anchor;
    r.slack = eps_disc;
    double worst = -kInfinity;
    int used = 0;
    for (int k = 0; k < traj.n_steps(); ++k) {
        const Vector& rho = traj.steps[k + 1].density;
        if (!(rho.minCoeff() > 0.0) || !std::isfinite(rho.maxCoeff())) continue;
        ++used;
        const double v = std::sqrt(sp.v_norm[k]);
        if (v - sp.theta[k] > worst) worst = v - sp.theta[k], r.lhs = v, r.rhs = sp.theta[k];
    }
    if (used == 0) return skipped(name, anchor, "no step with positive density");
    r.slack_used = std::max(worst, 0.0);
    r.pass = r.lhs <= r.rhs + r.slack;
    r.detail = fmt("%.0f of %.0f steps in the positivity set", used, traj.n_steps());
    return r;
}

CheckRecord check_metric_derivative_converse(const JkoTrajectory& traj, const SpeedProfile& sp)
{
    const std::string name = "metric_derivative_converse", anchor = "|v(t)| = 0 implies |mu'|(t) = 0";
    CheckRecord r;
    r.name = name;
    r.anchor = anchor;
    // Theta is resolved only up to the inner tolerance: tau Theta^2 / 2 <= drop + tol
    r.slack = std::sqrt(2.0 * traj.inner_tol / traj.tau);
    int used = 0;
    for (int k = 0; k < traj.n_steps(); ++k) {
        if (sp.v_norm[k] > 1e-24) continue;
        ++used;
        r.lhs = std::max(r.lhs, sp.theta[k]);
    }
    if (used == 0) return skipped(name, anchor, "no step with vanishing slope bound");
    r.slack_used = r.lhs;
    r.pass = r.lhs <= r.rhs + r.slack;
    r.detail = fmt("%.0f steps with vanishing slope bound", used);
    return r;
}

CheckRecord check_zero_lambda_speed(const EnergyFunctional& e, const JkoTrajectory& traj, double eps_disc)
{
    const std::string name = "zero_lambda_speed",
                      anchor = "|mu'| >= int |grad rho^a|^2 / sqrt(int |grad rho^a|^2 rho) for lambda = 0";
    if (e.variant != EnergyVariant::Power || e.lambda != 0.0 || e.potential)
        return skipped(name, anchor, "power energy with lambda = 0 only");
    CheckRecord r;
    r.name = name;
    r.anchor = anchor;
    r.slack = eps_disc;
    double worst = -kInfinity;
    int used = 0;
    for (int k = 0; k < traj.n_steps(); ++k) {
        const DiscreteMeasure& mu = traj.steps[k + 1];
        const Matrix flux = flux_field(e, mu, [](const Point&) { return 0.0; });
        double A = 0.0, B = 0.0;
        for (int i = 0; i < flux.rows(); ++i) {
            A += flux.row(i).squaredNorm();
            B += flux.row(i).squaredNorm() * mu.density[i];
        }
        A *= mu.grid->cell_volume;
        B *= mu.grid->cell_volume;
        if (!(A > 0.0 && B > 0.0)) continue;
        ++used;
        const double theta = std::sqrt(std::max(traj.step_costs[k], 0.0)) / traj.tau;
        const double bound = A / std::sqrt(B);
        if (bound - theta > worst) worst = bound - theta, r.lhs = bound, r.rhs = theta;
    }
    if (used == 0) return skipped(name, anchor, "no step with nonzero gradient");
    r.slack_used = std::max(worst, 0.0);
    r.pass = r.lhs <= r.rhs + r.slack;
    return r;
}

CheckRecord check_mass_bounds(const EnergyFunctional& e, const JkoTrajectory& traj)
{
    const std::string name = "mass_bounds", anchor = "int rho^a <= m_inf and int rho <= m_inf";
    if (e.potential) return skipped(name, anchor, "potential present");
    const Grid& g = *traj.steps.front().grid;
    const MassBound mb = mass_bound(e, traj.step_energies.front(), g.extent.volume());
    CheckRecord r;
    r.name = name;
    r.anchor = anchor;
    r.rhs = mb.m_inf;
    const double p = e.exponent();
    for (const DiscreteMeasure& mu : traj.steps) {
        const double lp = mu.density.array().pow(p).sum() * g.cell_volume;
        r.lhs = std::max({r.lhs, lp, mu.total_mass()});
    }
    r.pass = r.lhs <= r.rhs;
    return r;
}

CheckRecord check_weak_solution_rate(const EnergyFunctional& e, const std::vector<const JkoTrajectory*>& runs,
                                     const std::vector<TestFunction>& basket, double t1, double t2)
{
    CheckRecord r;
    r.name = "weak_solution_rate";
    r.anchor = "weak-form residual of the discrete solution <= C (tau + sqrt(tau))";
    std::vector<double> taus, res;
    for (const JkoTrajectory* t : runs) {
        taus.push_back(t->tau);
        res.push_back(weak_residual(e, *t, basket, t1, t2));
    }
    bool monotone = true;
    for (size_t k = 1; k < res.size(); ++k)
        if (taus[k] < taus[k - 1] ? res[k] >= res[k - 1] : res[k] <= res[k - 1]) monotone = false;
    std::string detail = "residuals:";
    for (size_t k = 0; k < res.size(); ++k) detail += fmt(" tau=%.3g:%.6g", taus[k], res[k]);
    if (*std::max_element(res.begin(), res.end()) <= 1e-12) {
        r.detail = detail + " (stationary)";
        return r;
    }
    double mx = 0.0, my = 0.0;
    for (size_t k = 0; k < res.size(); ++k) mx += std::log(taus[k]), my += std::log(res[k]);
    mx /= res.size();
    my /= res.size();
    double sxy = 0.0, sxx = 0.0;
    for (size_t k = 0; k < res.size(); ++k) {
        sxy += (std::log(taus[k]) - mx) * (std::log(res[k]) - my);
        sxx += (std::log(taus[k]) - mx) * (std::log(taus[k]) - mx);
    }
    const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
    r.lhs = 0.4;
    r.rhs = slope;
    r.pass = monotone && slope >= 0.4;
    r.detail = detail + fmt(" slope=%.4g monotone=%.0f", slope, monotone);
    return r;
}

double nested_l1(const DiscreteMeasure& coarse, const DiscreteMeasure& fine)
{
    const Grid& gc = *coarse.grid;
    const Grid& gf = *fine.grid;
    if (gc.dim != gf.dim || gf.n_per_axis % gc.n_per_axis != 0)
        throw std::invalid_argument("nested_l1: grids are not nested");
    const int ratio = gf.n_per_axis / gc.n_per_axis;
    double total = 0.0;
    for (int i = 0; i < gf.num_cells(); ++i) {
        const auto idx = gf.axis_index(i);
        const int c = gc.cell_index(idx[0] / ratio, gc.dim == 2 ? idx[1] / ratio : 0);
        total += std::abs(coarse.density[c] - fine.density[i]);
    }
    return total * gf.cell_volume;
}

CheckRecord compare_to_oracle(const JkoTrajectory& traj, const OracleRun& oracle, const std::vector<double>& times,
                              double tolerance)
{
    CheckRecord r;
    r.name = "oracle_agreement";
    r.anchor = "the discrete solution converges to the weak solution";
    r.rhs = tolerance;
    std::string detail = "relative L1:";
    for (double t : times) {
        size_t k = 0;
        while (k < oracle.times.size() && std::abs(oracle.times[k] - t) > 1e-12 * std::max(1.0, t)) ++k;
        if (k == oracle.times.size()) throw std::invalid_argument("compare_to_oracle: time missing from oracle run");
        const DiscreteMeasure& ref = oracle.solutions[k];
        const double rel = nested_l1(sample_at(traj, t), ref) / std::max(ref.total_mass(), 1e-300);
        r.lhs = std::max(r.lhs, rel);
        detail += fmt(" t=%.4g:%.6g", t, rel);
    }
    r.pass = r.lhs <= r.rhs;
    r.detail = detail;
    return r;
}

DiagnosticsReport run_diagnostics(const EnergyFunctional& e, const JkoTrajectory& traj,
                                  const DiagnosticsOptions& opt)
{
    DiagnosticsReport rep;
    rep.tau = traj.tau;
    rep.h = grid_h(traj);
    rep.alpha = e.exponent();
    rep.lambda = e.lambda;
    rep.E0 = traj.step_energies.front();
    rep.variant = e.variant == EnergyVariant::Power ? "power" : "entropy";
    const double eps = discretization_allowance(traj, rep.E0, opt.C_d);

    static const std::vector<std::string> all = {
        "energy_monotone", "step_sum", "refined_step_sum", "holder",
        "boundary_band", "envelopes", "edi", "metric_derivative_bound",
        "metric_derivative_converse", "mass_bounds"};
    std::vector<std::string> names = opt.checks.empty() ? all : opt.checks;
    if (opt.zero_lambda_speed && std::find(names.begin(), names.end(), "zero_lambda_speed") == names.end())
        names.push_back("zero_lambda_speed");

    const SpeedProfile sp = speed_profile(e, traj);
    for (const std::string& n : names) {
        if (n == "energy_monotone") rep.records.push_back(check_energy_monotone(traj));
        else if (n == "step_sum") rep.records.push_back(check_step_sum(traj));
        else if (n == "refined_step_sum") rep.records.push_back(check_refined_step_sum(e, traj, eps));
        else if (n == "holder") rep.records.push_back(check_holder(e, traj));
        else if (n == "boundary_band") rep.records.push_back(check_boundary_band(e, traj));
        else if (n == "envelopes") rep.records.push_back(check_envelopes(e, traj));
        else if (n == "edi") rep.records.push_back(check_edi(e, traj, sp, eps));
        else if (n == "metric_derivative_bound") rep.records.push_back(check_metric_derivative_bound(e, traj, sp, eps));
        else if (n == "metric_derivative_converse") rep.records.push_back(check_metric_derivative_converse(traj, sp));
        else if (n == "mass_bounds") rep.records.push_back(check_mass_bounds(e, traj));
        else if (n == "zero_lambda_speed") rep.records.push_back(check_zero_lambda_speed(e, traj, eps));
        else throw std::invalid_argument("unknown check '" + n + "'");
    }
    return rep;
}

}  // namespace wb2flow
