#include "wb2flow/jko.hpp"

#include "wb2flow/interval_transport.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <stdexcept>

namespace wb2flow {

void JkoConfig::validate() const
{
    if (!(tau > 0.0)) throw std::invalid_argument("jko: tau must be positive");
    if (n_steps < 1) throw std::invalid_argument("jko: n_steps must be >= 1");
    if (max_iters < 1) throw std::invalid_argument("jko: max_iters must be >= 1");
    if (!(step_b > 0.0)) throw std::invalid_argument("jko: step_b must be positive");
}

JkoSettings resolve(const JkoConfig& cfg, const EnergyFunctional& e, const DiscreteMeasure& mu0)
{
    cfg.validate();
    const Grid& g = *mu0.grid;
    JkoSettings s;
    s.tau = cfg.tau;
    s.model = cfg.model.value_or(g.dim == 1 ? TransportModel::PiecewiseConstant : TransportModel::CellCenters);
    if (s.model == TransportModel::PiecewiseConstant && g.dim != 1)
        throw std::invalid_argument("jko: piecewise-constant transport needs a 1D grid");
    s.solver = cfg.solver;
    if (s.solver == JkoSolver::Auto)
        s.solver = s.model == TransportModel::PiecewiseConstant ? JkoSolver::QuasiNewton : JkoSolver::Subgradient;
    if (s.solver == JkoSolver::QuasiNewton && s.model != TransportModel::PiecewiseConstant)
        throw std::invalid_argument("jko: quasi-newton solver needs the piecewise-constant model");
    if (s.solver == JkoSolver::EntropicScaling && s.model != TransportModel::CellCenters)
        throw std::invalid_argument("jko: entropic scaling works on the cell-centre model");
    s.inner_tol = cfg.inner_tol > 0.0 ? cfg.inner_tol : 1e-8 * (1.0 + evaluate_energy(e, mu0));
    s.max_iters = cfg.max_iters;
    const double h = g.h.minCoeff();
    s.entropic_epsilon = cfg.entropic_epsilon > 0.0 ? cfg.entropic_epsilon : h * h / 10.0;
    s.step_a = cfg.step_a > 0.0 ? cfg.step_a : 0.5 * std::max(mu0.density.maxCoeff(), e.lambda + 1e-3);
    s.step_b = cfg.step_b;
    s.entropic_polish = cfg.entropic_polish;
    return s;
}

namespace {

// Among the admissible derivatives base + sum w_k unit_k (value at lo zero),
// pick the one with the smallest certificate. The first and last gaps are free;
// any others keep w = 0.
template <class Cert>
Vector select_subgradient(const Vector& base, double base_at_lo, const std::vector<GapFreedom>& gaps,
                          const Cert& cert)
{
    const GapFreedom& g1 = gaps.front();
    if (gaps.size() == 1) {
        const double w = std::clamp(-base_at_lo / g1.unit_at_lo, g1.w_lo, g1.w_hi);
        return base + w * g1.unit;
    }
    const GapFreedom& g2 = gaps.back();
    // w2 = -(base_at_lo + w1 u1) / u2 must lie in [w_lo2, w_hi2]
    const double u1 = g1.unit_at_lo, u2 = g2.unit_at_lo;
    double lo = g1.w_lo, hi = g1.w_hi;
    const double a = (-base_at_lo - g2.w_hi * u2) / u1, b = (-base_at_lo - g2.w_lo * u2) / u1;
    lo = std::max(lo, std::min(a, b));
    hi = std::min(hi, std::max(a, b));
    auto make = [&](double w1) {
        const double w2 = std::clamp(-(base_at_lo + w1 * u1) / u2, g2.w_lo, g2.w_hi);
        return Vector(base + w1 * g1.unit + w2 * g2.unit);
    };
    if (!(hi > lo)) return make(std::clamp(0.5 * (lo + hi), g1.w_lo, g1.w_hi));
    // golden section on a convex function of w1
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
    double f1 = cert(make(x1)), f2 = cert(make(x2));
    for (int it = 0; it < 80 && hi - lo > 1e-14 * (1.0 + std::abs(lo)); ++it) {
        if (f1 <= f2) {
            hi = x2, x2 = x1, f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = cert(make(x1));
        } else {
            lo = x1, x1 = x2, f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = cert(make(x2));
        }
    }
    return make(f1 <= f2 ? x1 : x2);
}

}  // namespace

StepObjective::StepObjective(const EnergyFunctional& e, const DiscreteMeasure& prev, double tau,
                             TransportModel model)
    : e_(e), prev_(prev), tau_(tau), model_(model), potential_(potential_values(e, *prev.grid))
{
    if (e.variant == EnergyVariant::Entropy) lower_ = 1e-12 * e.lambda;
    if (model == TransportModel::PiecewiseConstant)
        prev_line_ = LineMeasure::from_measure(prev);
    else
        problem_ = TransportProblem::from_measures(prev, prev);
}

// Upper bound on objective - min from the linearization of the cost at rho,
// d the derivative of the cost in the density.
double StepObjective::gap_for(const Vector& rho, const Vector& d) const
{
    const double vol = prev_.grid->cell_volume;
    double gap = 0.0;
    for (int j = 0; j < size(); ++j) {
        const double q = potential_[j] + d[j] / (2.0 * tau_ * vol);
        const double s = std::max(inverse_dU(e_, -q), lower_);
        gap += vol * ((evaluate_U(e_, rho[j]) + q * rho[j]) - (evaluate_U(e_, s) + q * s));
    }
    return std::max(gap, 0.0);
}

// The cost is polyhedral in the target masses, so the duals at a target
// nudged along `tilt` are a subgradient at rho itself, namely the one that
// maximizes its pairing with tilt.
Vector StepObjective::tilted_dual(const Vector& rho, Vector tilt, double* cost) const
{
    const double vol = prev_.grid->cell_volume;
    double big = 0.0;
    for (int j = 0; j < size(); ++j) {
        if (rho[j] <= 0.0 && tilt[j] < 0.0) tilt[j] = 0.0;
        if (std::isfinite(tilt[j])) big = std::max(big, std::abs(tilt[j]));
    }
    // U'(0) = -inf for the entropy: such cells get the strongest finite pull
    for (int j = 0; j < size(); ++j)
        if (!std::isfinite(tilt[j])) tilt[j] = tilt[j] > 0.0 ? 10.0 * (big + 1.0) : 0.0;
    const double norm = tilt.cwiseAbs().sum();
    if (norm > 0.0) tilt *= 1e-9 * (rho.sum() * vol + 1e-3) / norm;
    tilt = tilt.cwiseMax(-rho * vol);
    TransportProblem p = problem_;
    p.target.masses = rho * vol + tilt;
    const ExactSolution s = solve_exact(p);
    if (cost) *cost = s.cost - s.duals.psi_target.dot(tilt);
    return s.duals.psi_target * vol;
}

void StepObjective::tighten(const Vector& rho, Eval& ev, double tol, int rounds) const
{
    if (model_ != TransportModel::CellCenters || ev.gap <= tol) return;
    const double vol = prev_.grid->cell_volume;
    const int n = size();
    Vector d(n);
    for (int j = 0; j < n; ++j)
        d[j] = (ev.gradient[j] / vol - evaluate_dU(e_, rho[j]) - potential_[j]) * 2.0 * tau_ * vol;
    double gap = ev.gap;
    // pairwise Frank-Wolfe over the subdifferential; each vertex comes from one tilted solve
    std::vector<std::pair<Vector, double>> active{{d, 1.0}};
    for (int k = 0; k < rounds && gap > tol; ++k) {
        Vector tilt(n), grad(n);
        for (int j = 0; j < n; ++j) {
            const double q = potential_[j] + d[j] / (2.0 * tau_ * vol);
            const double s_star = std::max(inverse_dU(e_, -q), lower_);
            tilt[j] = s_star - rho[j];
            grad[j] = -tilt[j];
        }
        const Vector v = tilted_dual(rho, tilt, nullptr);
        size_t away = 0;
        for (size_t m = 1; m < active.size(); ++m)
            if (grad.dot(active[m].first) > grad.dot(active[away].first)) away = m;
        const double w_away = active[away].second;
        const Vector dir = v - active[away].first;
        if (!(grad.dot(dir) < 0.0)) break;
        const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
        double lo = 0.0, hi = w_away;
        auto at = [&](double g) { return gap_for(rho, d + g * dir); };
        double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo), f1 = at(x1), f2 = at(x2);
        for (int it = 0; it < 40; ++it) {
            if (f1 <= f2) {
                hi = x2, x2 = x1, f2 = f1;
                x1 = hi - phi * (hi - lo);
                f1 = at(x1);
            } else {
                lo = x1, x1 = x2, f1 = f2;
                x2 = lo + phi * (hi - lo);
                f2 = at(x2);
            }
        }
        double g = f1 <= f2 ? x1 : x2, f = std::min(f1, f2);
        const double f_end = at(w_away);
        if (f_end <= f) g = w_away, f = f_end;
        if (!(f < gap)) break;
        d += g * dir;
        gap = f;
        active[away].second -= g;
        bool merged = false;
        for (auto& [u, w] : active)
            if ((u - v).cwiseAbs().maxCoeff() <= 1e-14 * (1.0 + v.cwiseAbs().maxCoeff())) {
                w += g;
                merged = true;
                break;
            }
        if (!merged) active.emplace_back(v, g);
        if (active[away].second <= 0.0) active.erase(active.begin() + away);
    }
    if (gap < ev.gap) {
        ev.gap = gap;
        for (int j = 0; j < n; ++j)
            ev.gradient[j] = vol * (evaluate_dU(e_, rho[j]) + potential_[j] + d[j] / (2.0 * tau_ * vol));
    }
}

StepObjective::Eval StepObjective::evaluate(const Vector& rho) const
{
    const Grid& g = *prev_.grid;
    const double vol = g.cell_volume;
    const int n = size();
    Eval r;
    r.gap = -1.0;
    Vector dcost;  // derivative of the transport cost in the density

    auto certificate = [&](const Vector& d) { return gap_for(rho, d); };

    if (model_ == TransportModel::PiecewiseConstant) {
        IntervalCostGradient cg = interval_cost_gradient(prev_line_, g, rho, shift_hint_);
        shift_hint_ = cg.shift;
        r.cost = cg.cost;
        dcost = std::move(cg.gradient);
        if (!cg.gaps.empty()) {
            const Vector best = select_subgradient(dcost, cg.gradient_at_lo, cg.gaps, certificate);
            if (pinned_) {
                for (const GapFreedom& gf : cg.gaps) dcost += gf.w_inner * gf.unit;
                r.gap = certificate(best);
            } else {
                dcost = best;
            }
        }
    } else {
        Vector tilt(n);
        for (int j = 0; j < n; ++j) tilt[j] = -(evaluate_dU(e_, rho[j]) + potential_[j]);
        dcost = tilted_dual(rho, tilt, &r.cost);
    }

    r.value = r.cost / (2.0 * tau_);
    r.gradient.resize(n);
    for (int j = 0; j < n; ++j) {
        const double q = potential_[j] + dcost[j] / (2.0 * tau_ * vol);
        r.value += vol * (evaluate_U(e_, rho[j]) + potential_[j] * rho[j]);
        r.gradient[j] = vol * (evaluate_dU(e_, rho[j]) + q);
    }
    if (!(r.gap > 0.0)) r.gap = certificate(dcost);
    return r;
}

namespace {

struct InnerResult {
    Vector rho;
    StepObjective::Eval eval;
    int iterations = 0;
    bool converged = false;
};

InnerResult quasi_newton(const StepObjective& obj, Vector x, const JkoSettings& s)
{
    const double lb = obj.lower_bound();
    x = x.cwiseMax(lb);
    auto ev = obj.evaluate(x);
    const int memory = 20;
    std::deque<std::pair<Vector, Vector>> mem;  // (s, y)
    InnerResult out;
    int it = 0;
    double checkpoint = ev.value;
    for (; it < s.max_iters; ++it) {
        if (ev.gap <= s.inner_tol) {
            out.converged = true;
            break;
        }
        // kinks stall L-BFGS; hand over to the caller's fallback
        if (it > 0 && it % 200 == 0) {
            if (checkpoint - ev.value < 1e-3 * s.inner_tol) break;
            checkpoint = ev.value;
        }
        const Vector& g = ev.gradient;
        Eigen::Array<bool, Eigen::Dynamic, 1> active = (x.array() <= lb) && (g.array() > 0.0);
        Vector gf = active.select(0.0, g);

        Vector d = -gf;
        if (!mem.empty()) {
            std::vector<double> alpha(mem.size());
            for (size_t k = mem.size(); k-- > 0;) {
                const auto& [sk, yk] = mem[k];
                alpha[k] = sk.dot(d) / yk.dot(sk);
                d -= alpha[k] * yk;
            }
            const auto& [sl, yl] = mem.back();
            d *= sl.dot(yl) / yl.dot(yl);
            for (size_t k = 0; k < mem.size(); ++k) {
                const auto& [sk, yk] = mem[k];
                const double beta = yk.dot(d) / yk.dot(sk);
                d += (alpha[k] - beta) * sk;
            }
            d = active.select(0.0, d);
            if (!(gf.dot(d) < 0.0)) {
                mem.clear();
                d = -gf;
            }
        }
        if (mem.empty()) {
            const double gmax = gf.cwiseAbs().maxCoeff();
            if (gmax == 0.0) break;
            d *= 0.1 * (x.maxCoeff() + 1.0) / gmax;
        }

        double step = 1.0;
        bool accepted = false;
        Vector xn;
        StepObjective::Eval en;
        for (int ls = 0; ls < 60; ++ls, step *= 0.5) {
            xn = (x + step * d).cwiseMax(lb);
            const double decrease = g.dot(xn - x);
            if (decrease == 0.0) break;
            en = obj.evaluate(xn);
            if (en.value <= ev.value + 1e-4 * decrease) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (mem.empty()) break;  // stalled at rounding level
            mem.clear();
            continue;
        }
        Vector sk = xn - x, yk = en.gradient - g;
        if (sk.dot(yk) > 1e-12 * sk.norm() * yk.norm()) {
            mem.emplace_back(std::move(sk), std::move(yk));
            if (static_cast<int>(mem.size()) > memory) mem.pop_front();
        }
        x = std::move(xn);
        ev = std::move(en);
    }
    out.rho = std::move(x);
    out.eval = std::move(ev);
    out.iterations = it;
    out.converged = out.converged || out.eval.gap <= s.inner_tol;
    return out;
}

// Euclidean projection onto {x >= lb, sum x = total}.
Vector project_mass(const Vector& y, double lb, double total)
{
    const int n = static_cast<int>(y.size());
    const double t = total - n * lb;
    std::vector<double> u(y.data(), y.data() + n);
    for (double& v : u) v -= lb;
    std::sort(u.begin(), u.end(), std::greater<>());
    double sum = 0.0, theta = 0.0;
    for (int k = 0; k < n; ++k) {
        sum += u[k];
        const double th = (sum - t) / (k + 1);
        if (u[k] - th > 0.0) theta = th;
    }
    return ((y.array() - lb - theta).max(0.0) + lb).matrix();
}

// Duality gap of the linearized problem restricted to sum x = total, maximized
// over the multiplier of the mass constraint.
double pinned_gap(const EnergyFunctional& e, const Vector& x, const Vector& grad, double vol, double lb)
{
    const int n = static_cast<int>(x.size());
    Vector q(n);
    double head = 0.0;
    for (int j = 0; j < n; ++j) {
        q[j] = grad[j] / vol - evaluate_dU(e, x[j]);
        head += vol * (evaluate_U(e, x[j]) + q[j] * x[j]);
    }
    const double total = x.sum() * vol;
    auto lower = [&](double mu, double* mass) {
        double v = -mu * total, m = 0.0;
        for (int j = 0; j < n; ++j) {
            const double s = std::max(inverse_dU(e, -(q[j] + mu)), lb);
            v += vol * (evaluate_U(e, s) + (q[j] + mu) * s);
            m += vol * s;
        }
        if (mass) *mass = m;
        return v;
    };
    // the lower bound is concave in mu with slope mass(mu) - total
    double a = -1.0, b = 1.0, m = 0.0;
    while (lower(a, &m), m < total && a > -1e12) a *= 2.0;
    while (lower(b, &m), m > total && b < 1e12) b *= 2.0;
    for (int it = 0; it < 200 && b - a > 1e-13 * (1.0 + std::abs(a)); ++it) {
        const double c = 0.5 * (a + b);
        lower(c, &m);
        (m > total ? a : b) = c;
    }
    return std::max(head - lower(0.5 * (a + b), nullptr), 0.0);
}

// Spectral projected gradient with the total mass held fixed. Used when the
// minimizer sits where the cost is not differentiable in the total mass; the
// certificate is then relative to the fixed-mass slice, and the point is only
// accepted if scaling the mass up or down does not lower the objective.
InnerResult mass_pinned(const StepObjective& obj, const EnergyFunctional& e, const Vector& start, double total,
                        const JkoSettings& s, double vol)
{
    const double lb = obj.lower_bound();
    obj.set_mass_pinned(true);
    Vector x = project_mass(start, lb, total);
    auto ev = obj.evaluate(x);
    ev.gap = pinned_gap(e, x, ev.gradient, vol, lb);
    std::deque<double> recent{ev.value};
    double alpha = 0.0;
    {
        const Vector d = project_mass(x - ev.gradient, lb, total) - x;
        const double dn = d.cwiseAbs().maxCoeff();
        alpha = dn > 0.0 ? std::min(1.0, 0.1 * (x.maxCoeff() + 1.0) / dn) : 1.0;
    }
    InnerResult out;
    int it = 0;
    for (; it < s.max_iters; ++it) {
        if (ev.gap <= s.inner_tol) {
            out.converged = true;
            break;
        }
        const Vector d = project_mass(x - alpha * ev.gradient, lb, total) - x;
        const double slope = ev.gradient.dot(d);
        if (!(slope < 0.0)) break;
        const double fmax = *std::max_element(recent.begin(), recent.end());
        double step = 1.0;
        bool accepted = false;
        Vector xn;
        StepObjective::Eval en;
        for (int ls = 0; ls < 60; ++ls, step *= 0.5) {
            xn = x + step * d;
            en = obj.evaluate(xn);
            if (en.value <= fmax + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        en.gap = pinned_gap(e, xn, en.gradient, vol, lb);
        const Vector sk = xn - x, yk = en.gradient - ev.gradient;
        const double sy = sk.dot(yk);
        alpha = sy > 0.0 ? std::clamp(sk.squaredNorm() / sy, 1e-12, 1e12) : 1e12;
        x = std::move(xn);
        ev = std::move(en);
        recent.push_back(ev.value);
        if (recent.size() > 10) recent.pop_front();
    }
    obj.set_mass_pinned(false);
    if (out.converged) {
        for (double f : {1.0 - 1e-6, 1.0 + 1e-6})
            if (obj.evaluate((x * f).cwiseMax(lb)).value < ev.value - s.inner_tol) out.converged = false;
    }
    out.rho = std::move(x);
    out.eval = std::move(ev);
    out.iterations = it;
    return out;
}

InnerResult subgradient(const StepObjective& obj, Vector x, const JkoSettings& s)
{
    const double lb = obj.lower_bound();
    x = x.cwiseMax(lb);
    Vector prev = x;
    auto ev = obj.evaluate(x);
    InnerResult best{x, ev, 0, false};
    int k_restart = 0;
    double last_value = ev.value;
    int it = 0;
    for (; it < s.max_iters; ++it) {
        if (it % 20 == 0) obj.tighten(best.rho, best.eval, s.inner_tol, 10);
        if (best.eval.gap <= s.inner_tol) {
            best.converged = true;
            break;
        }
        const int k = it - k_restart;
        const Vector y = (x + (k > 0 ? double(k - 1) / (k + 2) : 0.0) * (x - prev)).cwiseMax(lb);
        const auto ey = obj.evaluate(y);
        if (ey.value < best.eval.value) best = {y, ey, 0, false};
        const double gmax = ey.gradient.cwiseAbs().maxCoeff();
        if (gmax == 0.0) break;
        const double t = s.step_a / (it + s.step_b);
        prev = x;
        x = (y - (t / gmax) * ey.gradient).cwiseMax(lb);
        ev = obj.evaluate(x);
        if (ev.value < best.eval.value) best = {x, ev, 0, false};
        if (ev.value > last_value) {
            k_restart = it + 1;
            prev = x;
        }
        last_value = ev.value;
    }
    best.iterations = it;
    best.converged = best.eval.gap <= s.inner_tol;
    return best;
}

// Root of 2 tau (U'(r) + v) + eps log(r vol / K) = 0, log K given.
double kl_prox(const EnergyFunctional& e, double v, double logK, double vol, double tau, double eps)
{
    const double logk = logK - std::log(vol);  // log(K / vol)
    if (e.variant == EnergyVariant::Entropy) {
        const double lr = (2.0 * tau * (std::log(e.lambda) - v) + eps * logk) / (2.0 * tau + eps);
        return std::exp(lr);
    }
    auto F = [&](double r) { return 2.0 * tau * (evaluate_dU(e, r) + v) + eps * (std::log(r) - logk); };
    // F is increasing from -inf at 0+; find hi with F(hi) > 0
    double lo = 0.0, hi = std::max({1.0, e.lambda, std::exp(logk)});
    while (F(hi) <= 0.0) hi *= 2.0;
    double r = std::min(std::exp(logk), hi);
    if (!(r > 0.0)) r = 0.5 * hi;
    const double a = e.alpha;
    for (int it = 0; it < 100; ++it) {
        const double f = F(r);
        if (f == 0.0) return r;
        (f < 0.0 ? lo : hi) = r;
        const double df = 2.0 * tau * a * std::pow(r, a - 2.0) + eps / r;
        double next = r - f / df;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - r) <= 1e-15 * r) return next;
        r = next;
    }
    return r;
}

InnerResult entropic_scaling(const StepObjective& obj, const EnergyFunctional& e, const DiscreteMeasure& prev,
                             const JkoSettings& s)
{
    const Grid& g = *prev.grid;
    const int n = g.num_cells();
    const double eps = s.entropic_epsilon, tau = s.tau, vol = g.cell_volume;
    const TransportProblem p = TransportProblem::from_measures(prev, prev);
    Matrix C(n, n);
    Vector cR(n);
    for (int i = 0; i < n; ++i) {
        cR[i] = p.source_to_reservoir(i);
        for (int j = 0; j < n; ++j) C(i, j) = p.cost(i, j);
    }
    const Vector a = prev.masses();
    const Vector V = potential_values(e, g);
    Vector f = Vector::Zero(n), gpot = Vector::Zero(n), rho = prev.density;

    auto lse = [](const Vector& v) {
        const double m = v.maxCoeff();
        if (!std::isfinite(m)) return m;
        return m + std::log((v.array() - m).exp().sum());
    };
    Vector buf(n + 1);
    InnerResult out;
    int it = 0;
    for (; it < s.max_iters; ++it) {
        for (int i = 0; i < n; ++i) {
            if (a[i] <= 0.0) {
                f[i] = -kInfinity;
                continue;
            }
            buf[n] = -cR[i] / eps;
            for (int j = 0; j < n; ++j) buf[j] = (gpot[j] - C(i, j)) / eps;
            f[i] = eps * (std::log(a[i]) - lse(buf));
        }
        double change = 0.0;
        for (int j = 0; j < n; ++j) {
            buf[n] = -cR[j] / eps;
            for (int i = 0; i < n; ++i) buf[i] = std::isfinite(f[i]) ? (f[i] - C(i, j)) / eps : -kInfinity;
            const double logK = lse(buf);
            const double r = kl_prox(e, V[j], logK, vol, tau, eps);
            change = std::max(change, std::abs(r - rho[j]));
            rho[j] = r;
            gpot[j] = eps * (std::log(r * vol) - logK);
        }
        if (change <= 1e-3 * s.inner_tol) {
            out.converged = true;
            ++it;
            break;
        }
    }
    out.rho = rho;
    out.eval = obj.evaluate(rho);
    out.iterations = it;
    return out;
}

}  // namespace

StepResult jko_step(const EnergyFunctional& e, const DiscreteMeasure& prev, const JkoSettings& s,
                    const Vector* initial)
{
    if (!std::isfinite(evaluate_energy(e, prev))) throw std::invalid_argument("jko_step: infinite energy");
    const StepObjective obj(e, prev, s.tau, s.model);
    const Vector start = initial ? *initial : prev.density;
    InnerResult r;
    switch (s.solver) {
    case JkoSolver::QuasiNewton:
        r = quasi_newton(obj, start, s);
        if (!r.converged) {
            InnerResult pinned = mass_pinned(obj, e, r.rho, prev.density.sum(), s, prev.grid->cell_volume);
            pinned.iterations += r.iterations;
            if (pinned.converged || pinned.eval.gap < r.eval.gap) r = std::move(pinned);
        }
        break;
    case JkoSolver::Subgradient: r = subgradient(obj, start, s); break;
    case JkoSolver::EntropicScaling:
        r = entropic_scaling(obj, e, prev, s);
        r.converged = r.eval.gap <= s.inner_tol;
        if (!r.converged && s.entropic_polish) {
            // the scaling answer carries an O(eps / tau) bias; finish on the exact cost.
            // prev is tried first since cell-centre steps with tau << h^2 stay put
            int used = r.iterations;
            JkoSettings rest = s;
            rest.max_iters = std::max(1, s.max_iters - used);
            InnerResult warm = subgradient(obj, start, rest);
            used += warm.iterations;
            if (!warm.converged && used < s.max_iters) {
                rest.max_iters = std::max(1, s.max_iters - used);
                InnerResult from_scaling = subgradient(obj, r.rho, rest);
                used += from_scaling.iterations;
                if (from_scaling.converged || from_scaling.eval.gap < warm.eval.gap) warm = std::move(from_scaling);
            }
            r = std::move(warm);
            r.iterations = used;
        }
        break;
    case JkoSolver::Auto: throw std::logic_error("jko_step: unresolved solver");
    }
    StepResult out{DiscreteMeasure(prev.grid, r.rho), {}};
    out.certificate.objective = r.eval.value;
    out.certificate.gap = r.eval.gap;
    out.certificate.step_cost = r.eval.cost;
    out.certificate.iterations = r.iterations;
    out.certificate.converged = r.converged;
    return out;
}

JkoTrajectory run_scheme(const EnergyFunctional& e, const DiscreteMeasure& mu0, const JkoConfig& cfg,
                         const std::function<void(int, const StepCertificate&)>& progress)
{
    const JkoSettings s = resolve(cfg, e, mu0);
    JkoTrajectory t;
    t.tau = s.tau;
    t.inner_tol = s.inner_tol;
    t.model = s.model;
    t.steps.push_back(mu0);
    t.step_energies.push_back(evaluate_energy(e, mu0));
    for (int k = 0; k < cfg.n_steps; ++k) {
        StepResult r = jko_step(e, t.steps.back(), s);
        t.step_costs.push_back(r.certificate.step_cost);
        t.step_energies.push_back(evaluate_energy(e, r.measure));
        t.certificates.push_back(r.certificate);
        t.steps.push_back(std::move(r.measure));
        if (progress) progress(k + 1, t.certificates.back());
    }
    return t;
}

const DiscreteMeasure& sample_at(const JkoTrajectory& traj, double t)
{
    if (!(t >= 0.0)) throw std::out_of_range("sample_at: t must be >= 0");
    if (t == 0.0) return traj.steps.front();
    const double q = t / traj.tau;
    const long n = static_cast<long>(std::ceil(q - 1e-9 * std::max(1.0, q)));
    if (n > traj.n_steps()) throw std::out_of_range("sample_at: t beyond the last step");
    return traj.steps[static_cast<size_t>(std::max(n, 1L))];
}

namespace {

double discrete_first_variation(const EnergyFunctional& e, const DiscreteMeasure& mu_prev,
                                const DiscreteMeasure& mu_min, double tau, const TestFunction& zeta)
{
    const Grid& g = *mu_min.grid;
    if (g.dim != 1) throw std::invalid_argument("el_residual: piecewise-constant model needs a 1D grid");
    const StepObjective obj(e, mu_prev, tau, TransportModel::PiecewiseConstant);
    const Vector grad = obj.evaluate(mu_min.density).gradient;
    const Vector edges = g.edges();
    const Vector& rho = mu_min.density;
    const int n = g.n_per_axis;
    Vector drho = Vector::Zero(n);
    for (int k = 1; k < n; ++k) {
        const double v = zeta.gradient(Point::Constant(1, edges[k]))[0];
        const double moved = v * (v > 0.0 ? rho[k - 1] : rho[k]) / g.h[0];
        drho[k - 1] -= moved;
        drho[k] += moved;
    }
    return tau * std::abs(grad.dot(drho));
}

}  // namespace

double el_residual(const EnergyFunctional& e, const DiscreteMeasure& mu_prev, const DiscreteMeasure& mu_min,
                   double tau, const TestFunction& zeta, TransportModel model)
{
    if (model == TransportModel::PiecewiseConstant) return discrete_first_variation(e, mu_prev, mu_min, tau, zeta);
    const Grid& g = *mu_min.grid;
    const double p = e.exponent();
    const Matrix gradV = potential_gradients(e, g);
    double transport = 0.0, diffusion = 0.0;
    const ExactSolution s = solve_exact(TransportProblem::from_measures(mu_min, mu_prev));
    const BoundaryGeometry geom = boundary_geometry(g);
    for (const Flow& f : s.plan.interior) {
        const Point y = g.center(f.src);
        transport += f.mass * zeta.gradient(y).dot(g.center(f.dst) - y);
    }
    for (int i = 0; i < g.num_cells(); ++i) {
        const Point y = g.center(i);
        const Point proj = geom.proj.row(i).transpose();
        transport += s.plan.to_reservoir[i] * zeta.gradient(y).dot(proj - y);
        diffusion += g.cell_volume * (std::pow(mu_min.density[i], p) * zeta.laplacian(y) -
                                      mu_min.density[i] * gradV.row(i).dot(zeta.gradient(y)));
    }
    return std::abs(transport + tau * diffusion);
}

double quadrature_el_residual(const EnergyFunctional& e, const DiscreteMeasure& mu_prev,
                              const DiscreteMeasure& mu_min, double tau, const TestFunction& zeta)
{
    const Grid& g = *mu_min.grid;
    if (g.dim != 1) throw std::invalid_argument("quadrature_el_residual: 1D grids only");
    const double p = e.exponent();
    const Matrix gradV = potential_gradients(e, g);
    double transport = 0.0, diffusion = 0.0;
    const LineMeasure P = LineMeasure::from_measure(mu_prev);
    const LineMeasure Q = LineMeasure::from_measure(mu_min);
    const double c = optimal_shift(P, Q);
    static const double gx[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                 0.9061798459386640};
    static const double gw[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                 0.4786286704993665, 0.2369268850561891};
    Point y(1);
    for_each_coupling_interval(P, Q, c, [&](double s0, double s1, double x0, double x1, double y0, double y1) {
        const double half = 0.5 * (s1 - s0);
        for (int k = 0; k < 5; ++k) {
            const double w = 0.5 * (1.0 + gx[k]);
            y[0] = y0 + w * (y1 - y0);
            const double x = x0 + w * (x1 - x0);
            transport += gw[k] * half * zeta.gradient(y)[0] * (x - y[0]);
        }
    });
    // exact cell integrals of rho^p zeta'' and of rho V' zeta'
    const Vector edges = g.edges();
    Point a(1), b(1);
    for (int j = 0; j < g.num_cells(); ++j) {
        a[0] = edges[j];
        b[0] = edges[j + 1];
        diffusion += std::pow(mu_min.density[j], p) * (zeta.gradient(b)[0] - zeta.gradient(a)[0]);
        if (e.potential) {
            // midpoint rule for the drift term
            diffusion -= mu_min.density[j] * gradV(j, 0) * zeta.gradient(g.center(j))[0] * g.h[0];
        }
    }
    return std::abs(transport + tau * diffusion);
}

std::string to_string(JkoSolver s)
{
    switch (s) {
    case JkoSolver::Auto: return "auto";
    case JkoSolver::QuasiNewton: return "quasi_newton";
    case JkoSolver::Subgradient: return "subgradient";
    case JkoSolver::EntropicScaling: return "entropic";
    }
    return "auto";
}

std::string to_string(TransportModel m)
{
    return m == TransportModel::PiecewiseConstant ? "piecewise_constant" : "cell_centers";
}

JkoSolver parse_solver(const std::string& s)
{
    if (s == "auto") return JkoSolver::Auto;
    if (s == "quasi_newton") return JkoSolver::QuasiNewton;
    if (s == "subgradient") return JkoSolver::Subgradient;
    if (s == "entropic") return JkoSolver::EntropicScaling;
    throw std::invalid_argument("unknown solver '" + s + "'");
}

TransportModel parse_model(const std::string& s)
{
    if (s == "piecewise_constant") return TransportModel::PiecewiseConstant;
    if (s == "cell_centers") return TransportModel::CellCenters;
    throw std::invalid_argument("unknown transport model '" + s + "'");
}

}  // namespace wb2flow
