#include "wb2flow/transport.hpp"

#include "wb2flow/interval_transport.hpp"
#include "wb2flow/min_cost_flow.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wb2flow {

AtomList AtomList::from_measure(const DiscreteMeasure& mu)
{
    return AtomList{mu.grid->centers, mu.masses()};
}

TransportProblem TransportProblem::from_measures(const DiscreteMeasure& mu, const DiscreteMeasure& nu)
{
    if (!mu.grid->same_as(*nu.grid)) throw std::invalid_argument("transport: grid mismatch");
    return TransportProblem{mu.grid->extent, AtomList::from_measure(mu), AtomList::from_measure(nu)};
}

double TransportProblem::cost(int i, int j) const
{
    return (source.positions.row(i) - target.positions.row(j)).squaredNorm();
}

double TransportProblem::source_to_reservoir(int i) const
{
    const double d = boundary_distance(domain, source.positions.row(i).transpose());
    return d * d;
}

double TransportProblem::reservoir_to_target(int j) const
{
    const double d = boundary_distance(domain, target.positions.row(j).transpose());
    return d * d;
}

double TransportPlan::recompute_cost(const TransportProblem& p) const
{
    double c = 0.0;
    for (const Flow& f : interior) c += f.mass * p.cost(f.src, f.dst);
    for (int i = 0; i < to_reservoir.size(); ++i) c += to_reservoir[i] * p.source_to_reservoir(i);
    for (int j = 0; j < from_reservoir.size(); ++j) c += from_reservoir[j] * p.reservoir_to_target(j);
    return c;
}

Vector TransportPlan::source_marginal() const
{
    Vector m = to_reservoir;
    for (const Flow& f : interior) m[f.src] += f.mass;
    return m;
}

Vector TransportPlan::target_marginal() const
{
    Vector m = from_reservoir;
    for (const Flow& f : interior) m[f.dst] += f.mass;
    return m;
}

namespace {

void check_problem(const TransportProblem& p)
{
    if (p.source.size() == 0 || p.target.size() == 0)
        throw std::invalid_argument("transport: empty problem");
    if ((p.source.masses.array() < 0.0).any() || (p.target.masses.array() < 0.0).any())
        throw std::invalid_argument("transport: negative mass");
    if (!p.source.masses.allFinite() || !p.target.masses.allFinite())
        throw std::invalid_argument("transport: non-finite mass");
}

std::int64_t scaled(double c, double scale)
{
    return std::llround(c * scale);
}

}  // namespace

ExactSolution solve_exact(const TransportProblem& p, double cost_scale)
{
    check_problem(p);
    const int m = p.source.size(), k = p.target.size();
    const int B = m + k;
    MinCostFlow net(m + k + 1);
    for (int i = 0; i < m; ++i) net.add_supply(i, p.source.masses[i]);
    for (int j = 0; j < k; ++j) net.add_supply(m + j, -p.target.masses[j]);
    net.add_supply(B, p.target.masses.sum() - p.source.masses.sum());

    std::vector<int> interior_arc(static_cast<size_t>(m) * k);
    std::vector<int> out_arc(m), in_arc(k);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j)
            interior_arc[static_cast<size_t>(i) * k + j] =
                net.add_arc(i, m + j, MinCostFlow::kUnbounded, scaled(p.cost(i, j), cost_scale));
    for (int i = 0; i < m; ++i)
        out_arc[i] = net.add_arc(i, B, MinCostFlow::kUnbounded, scaled(p.source_to_reservoir(i), cost_scale));
    for (int j = 0; j < k; ++j)
        in_arc[j] = net.add_arc(B, m + j, MinCostFlow::kUnbounded, scaled(p.reservoir_to_target(j), cost_scale));
    net.solve();

    ExactSolution s;
    s.plan.to_reservoir.resize(m);
    s.plan.from_reservoir.resize(k);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j) {
            const double f = net.flow(interior_arc[static_cast<size_t>(i) * k + j]);
            if (f > 0.0) s.plan.interior.push_back({i, j, f});
        }
    for (int i = 0; i < m; ++i) s.plan.to_reservoir[i] = std::max(net.flow(out_arc[i]), 0.0);
    for (int j = 0; j < k; ++j) s.plan.from_reservoir[j] = std::max(net.flow(in_arc[j]), 0.0);
    s.plan.total_cost = s.plan.recompute_cost(p);
    s.cost = s.plan.total_cost;

    const auto& pot = net.potentials();
    s.duals.phi_source.resize(m);
    s.duals.psi_target.resize(k);
    for (int i = 0; i < m; ++i) s.duals.phi_source[i] = static_cast<double>(pot[B] - pot[i]) / cost_scale;
    for (int j = 0; j < k; ++j) s.duals.psi_target[j] = static_cast<double>(pot[m + j] - pot[B]) / cost_scale;
    return s;
}

double solve_balanced_w2_squared(const TransportProblem& p, double cost_scale)
{
    check_problem(p);
    const double ma = p.source.masses.sum(), mb = p.target.masses.sum();
    if (std::abs(ma - mb) > 1e-12 * std::max({ma, mb, 1.0}))
        throw std::invalid_argument("transport: balanced W2 needs equal masses");
    const int m = p.source.size(), k = p.target.size();
    MinCostFlow net(m + k);
    for (int i = 0; i < m; ++i) net.add_supply(i, p.source.masses[i]);
    for (int j = 0; j < k; ++j) net.add_supply(m + j, -p.target.masses[j] * ma / mb);
    std::vector<int> arc(static_cast<size_t>(m) * k);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j)
            arc[static_cast<size_t>(i) * k + j] =
                net.add_arc(i, m + j, MinCostFlow::kUnbounded, scaled(p.cost(i, j), cost_scale));
    net.solve();
    double c = 0.0;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j) c += net.flow(arc[static_cast<size_t>(i) * k + j]) * p.cost(i, j);
    return c;
}

namespace {

double logsumexp(const std::vector<double>& v)
{
    double mx = -kInfinity;
    for (double x : v) mx = std::max(mx, x);
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
}

}  // namespace

EntropicSolution solve_entropic(const TransportProblem& p, double eps, int max_iters, double tol)
{
    check_problem(p);
    if (!(eps > 0.0)) throw std::invalid_argument("solve_entropic: epsilon must be positive");
    const int m = p.source.size(), k = p.target.size();
    Matrix C(m, k);
    Vector cR(m), cRt(k);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j) C(i, j) = p.cost(i, j);
    for (int i = 0; i < m; ++i) cR[i] = p.source_to_reservoir(i);
    for (int j = 0; j < k; ++j) cRt[j] = p.reservoir_to_target(j);
    const Vector& a = p.source.masses;
    const Vector& b = p.target.masses;

    Vector f = Vector::Zero(m), g = Vector::Zero(k);
    std::vector<double> buf;
    auto row_update = [&]() {
        for (int i = 0; i < m; ++i) {
            if (a[i] <= 0.0) {
                f[i] = -kInfinity;
                continue;
            }
            buf.assign(1, -cR[i] / eps);
            for (int j = 0; j < k; ++j) buf.push_back((g[j] - C(i, j)) / eps);
            f[i] = eps * (std::log(a[i]) - logsumexp(buf));
        }
    };
    auto col_update = [&]() {
        for (int j = 0; j < k; ++j) {
            if (b[j] <= 0.0) {
                g[j] = -kInfinity;
                continue;
            }
            buf.assign(1, -cRt[j] / eps);
            for (int i = 0; i < m; ++i) buf.push_back((f[i] - C(i, j)) / eps);
            g[j] = eps * (std::log(b[j]) - logsumexp(buf));
        }
    };
    auto entry = [&](int i, int j) {
        if (!std::isfinite(f[i]) || !std::isfinite(g[j])) return 0.0;
        return std::exp((f[i] + g[j] - C(i, j)) / eps);
    };

    EntropicSolution out;
    Matrix P(m, k);
    Vector toR(m), fromR(k);
    auto assemble = [&]() {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < k; ++j) P(i, j) = entry(i, j);
        for (int i = 0; i < m; ++i) toR[i] = std::isfinite(f[i]) ? std::exp((f[i] - cR[i]) / eps) : 0.0;
        for (int j = 0; j < k; ++j) fromR[j] = std::isfinite(g[j]) ? std::exp((g[j] - cRt[j]) / eps) : 0.0;
    };
    auto violation = [&]() {
        return ((P.rowwise().sum() + toR) - a).cwiseAbs().sum() +
               ((P.colwise().sum().transpose() + fromR) - b).cwiseAbs().sum();
    };

    for (int it = 1; it <= max_iters; ++it) {
        row_update();
        col_update();
        out.iterations = it;
        if (it % 10 == 0 || it == max_iters) {
            assemble();
            out.marginal_violation = violation();
            if (out.marginal_violation <= tol) {
                out.converged = true;
                break;
            }
        }
    }
    assemble();
    out.marginal_violation = violation();

    // Round to an exactly feasible plan; the reservoir absorbs every deficit.
    for (int i = 0; i < m; ++i) {
        const double row = P.row(i).sum() + toR[i];
        if (row > a[i] && row > 0.0) {
            const double s = a[i] / row;
            P.row(i) *= s;
            toR[i] *= s;
        }
    }
    for (int j = 0; j < k; ++j) {
        const double col = P.col(j).sum() + fromR[j];
        if (col > b[j] && col > 0.0) {
            const double s = b[j] / col;
            P.col(j) *= s;
            fromR[j] *= s;
        }
    }
    for (int i = 0; i < m; ++i) toR[i] += std::max(a[i] - P.row(i).sum() - toR[i], 0.0);
    for (int j = 0; j < k; ++j) fromR[j] += std::max(b[j] - P.col(j).sum() - fromR[j], 0.0);

    out.plan.to_reservoir = toR;
    out.plan.from_reservoir = fromR;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j)
            if (P(i, j) > 0.0) out.plan.interior.push_back({i, j, P(i, j)});
    out.plan.total_cost = out.plan.recompute_cost(p);
    out.cost = out.plan.total_cost;
    return out;
}

double wb2_squared(const DiscreteMeasure& mu, const DiscreteMeasure& nu, TransportModel model)
{
    if (!mu.grid->same_as(*nu.grid)) throw std::invalid_argument("wb2: grid mismatch");
    if (model == TransportModel::PiecewiseConstant)
        return interval_wb2_squared(LineMeasure::from_measure(mu), LineMeasure::from_measure(nu));
    return solve_exact(TransportProblem::from_measures(mu, nu)).cost;
}

double wb2_distance(const DiscreteMeasure& mu, const DiscreteMeasure& nu, TransportModel model)
{
    return std::sqrt(std::max(wb2_squared(mu, nu, model), 0.0));
}

DualityCheck duality_test(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const Vector& zeta,
                          double lipschitz)
{
    DualityCheck r;
    r.lhs = std::abs(zeta.dot(mu.masses()) - zeta.dot(nu.masses()));
    r.rhs = lipschitz * std::sqrt(mu.total_mass() + nu.total_mass()) * wb2_distance(mu, nu);
    r.pass = r.lhs <= r.rhs + 1e-9;
    return r;
}

}  // namespace wb2flow
