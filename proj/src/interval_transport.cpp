#include "wb2flow/interval_transport.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace wb2flow {

void LineMeasure::finish()
{
    cum.assign(1, 0.0);
    for (const LinePiece& p : pieces) cum.push_back(cum.back() + p.mass);
}

LineMeasure LineMeasure::from_density(const Grid& grid, const Vector& density)
{
    if (grid.dim != 1) throw std::invalid_argument("line measure: 1D grids only");
    LineMeasure m;
    m.lo = grid.extent.lo[0];
    m.hi = grid.extent.hi[0];
    const Vector e = grid.edges();
    for (int j = 0; j < density.size(); ++j)
        if (density[j] > 0.0) m.pieces.push_back({density[j] * grid.h[0], e[j], e[j + 1]});
    m.finish();
    return m;
}

LineMeasure LineMeasure::from_measure(const DiscreteMeasure& mu)
{
    return from_density(*mu.grid, mu.density);
}

LineMeasure LineMeasure::from_atoms(double lo, double hi, const Vector& positions, const Vector& masses)
{
    std::vector<int> order(positions.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return positions[a] < positions[b]; });
    LineMeasure m;
    m.lo = lo;
    m.hi = hi;
    for (int k : order)
        if (masses[k] > 0.0) m.pieces.push_back({masses[k], positions[k], positions[k]});
    m.finish();
    return m;
}

double LineMeasure::quantile(double s) const
{
    if (s < 0.0) return lo;
    if (s >= mass()) return hi;
    const auto it = std::upper_bound(cum.begin(), cum.end(), s);
    const size_t k = static_cast<size_t>(it - cum.begin()) - 1;
    const LinePiece& p = pieces[k];
    return p.left + (s - cum[k]) * (p.right - p.left) / p.mass;
}

namespace {

// Affine fit of f on [a, b] from two interior samples, so that jumps at the
// ends do not leak in.
template <class F>
std::pair<double, double> affine_ends(const F& f, double a, double b)
{
    const double l = b - a;
    const double fa = f(a + 0.25 * l), fb = f(a + 0.75 * l);
    const double half = 0.5 * (fb - fa);
    return {fa - half, fb + half};
}

// Visits [t0, t1] pieces of [lo, hi] on which t -> X(G_Q(t) + c) is affine,
// where G_Q is the cumulative mass of Q.
template <class Fn>
void walk_target(const LineMeasure& P, const LineMeasure& Q, double c, Fn&& fn)
{
    auto emit = [&](double t0, double t1, double sigma0, double slope) {
        if (!(t1 > t0)) return;
        auto x = [&](double t) { return P.quantile(sigma0 + slope * (t - t0)); };
        double a = t0;
        if (slope > 0.0) {
            const double sigma1 = sigma0 + slope * (t1 - t0);
            auto it = std::upper_bound(P.cum.begin(), P.cum.end(), sigma0);
            for (; it != P.cum.end() && *it < sigma1; ++it) {
                const double t = t0 + (*it - sigma0) / slope;
                if (t > a && t < t1) {
                    const auto [xa, xb] = affine_ends(x, a, t);
                    fn(a, t, xa, xb);
                    a = t;
                }
            }
        }
        const auto [xa, xb] = affine_ends(x, a, t1);
        fn(a, t1, xa, xb);
    };

    double t = Q.lo;
    for (size_t k = 0; k < Q.pieces.size(); ++k) {
        const LinePiece& p = Q.pieces[k];
        emit(t, p.left, Q.cum[k] + c, 0.0);
        if (p.right > p.left) emit(p.left, p.right, Q.cum[k] + c, p.mass / (p.right - p.left));
        t = std::max(t, p.right);
    }
    emit(t, Q.hi, Q.mass() + c, 0.0);
}

}  // namespace

void for_each_coupling_interval(const LineMeasure& P, const LineMeasure& Q, double c,
                                const CouplingVisitor& visit)
{
    std::vector<double> pts(P.cum);
    for (double u : Q.cum) pts.push_back(u + c);
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    for (size_t k = 0; k + 1 < pts.size(); ++k) {
        const double s0 = pts[k], s1 = pts[k + 1];
        if (!(s1 > s0)) continue;
        const auto [x0, x1] = affine_ends([&](double s) { return P.quantile(s); }, s0, s1);
        const auto [y0, y1] = affine_ends([&](double s) { return Q.quantile(s - c); }, s0, s1);
        visit(s0, s1, x0, x1, y0, y1);
    }
}

double shift_cost(const LineMeasure& P, const LineMeasure& Q, double c)
{
    double total = 0.0;
    for_each_coupling_interval(P, Q, c, [&](double s0, double s1, double x0, double x1, double y0, double y1) {
        const double d0 = x0 - y0, d1 = x1 - y1;
        total += (s1 - s0) * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0;
    });
    return total;
}

double shift_slope(const LineMeasure& P, const LineMeasure& Q, double c)
{
    double total = 0.0;
    walk_target(P, Q, c, [&](double t0, double t1, double x0, double x1) {
        total += (t1 - t0) * (x0 + x1 - t0 - t1);
    });
    return total;
}

double optimal_shift(const LineMeasure& P, const LineMeasure& Q, double hint)
{
    if (std::abs(P.hi - Q.hi) > 1e-12 || std::abs(P.lo - Q.lo) > 1e-12)
        throw std::invalid_argument("interval transport: measures live on different segments");
    const double M = P.mass(), N = Q.mass();
    const double lo = -N - 1.0, hi = M + 1.0;
    const double scale = std::max(1.0, M + N);
    auto slope = [&](double c) { return shift_slope(P, Q, c); };

    // Bracket [a, b] with slope(a) < 0 <= slope(b); the right derivative is
    // nondecreasing since the cost is convex in c.
    double a = lo, b = hi, fa = slope(lo), fb = slope(hi);
    if (std::isfinite(hint) && hint > lo && hint < hi) {
        const double fh = slope(hint);
        if (fh == 0.0) return hint;
        double width = 1e-6 * scale;
        if (fh < 0.0) {
            a = hint, fa = fh;
            for (;;) {
                const double c = std::min(hint + width, hi);
                const double fc = c == hi ? fb : slope(c);
                if (fc >= 0.0) { b = c, fb = fc; break; }
                a = c, fa = fc;
                width *= 16.0;
            }
        } else {
            b = hint, fb = fh;
            for (;;) {
                const double c = std::max(hint - width, lo);
                const double fc = c == lo ? fa : slope(c);
                if (fc < 0.0) { a = c, fa = fc; break; }
                b = c, fb = fc;
                width *= 16.0;
            }
        }
    }

    // Illinois variant of regula falsi, with bisection when it stalls.
    const double tol = 1e-15 * scale;
    int side = 0;
    for (int it = 0; it < 200 && b - a > tol; ++it) {
        double c = (a * fb - b * fa) / (fb - fa);
        if (!(c > a && c < b) || it % 8 == 7) c = 0.5 * (a + b);
        const double fc = slope(c);
        if (fc == 0.0) return c;
        if (fc < 0.0) {
            a = c, fa = fc;
            if (side == -1) fb *= 0.5;
            side = -1;
        } else {
            b = c, fb = fc;
            if (side == 1) fa *= 0.5;
            side = 1;
        }
    }
    return 0.5 * (a + b);
}

double interval_wb2_squared(const LineMeasure& P, const LineMeasure& Q)
{
    return std::max(shift_cost(P, Q, optimal_shift(P, Q)), 0.0);
}

ReservoirExchange reservoir_exchange(const LineMeasure& P, const LineMeasure& Q, double c)
{
    ReservoirExchange r;
    const double M = P.mass(), N = Q.mass();
    for_each_coupling_interval(P, Q, c, [&](double s0, double s1, double, double, double, double) {
        const double sm = 0.5 * (s0 + s1);
        const bool in_p = sm > 0.0 && sm < M;
        const bool in_q = sm - c > 0.0 && sm - c < N;
        if (in_p && !in_q) r.to_boundary += s1 - s0;
        if (in_q && !in_p) r.from_boundary += s1 - s0;
    });
    return r;
}

ShiftPotential::ShiftPotential(const LineMeasure& P, const LineMeasure& Q, double c)
{
    struct Raw {
        double t0, t1, A, B;
    };
    std::vector<Raw> raw;
    walk_target(P, Q, c, [&](double t0, double t1, double x0, double x1) {
        // f(t) = 2 (x(t) - t) = A + B (t - t0)
        raw.push_back({t0, t1, 2.0 * (x0 - t0), 2.0 * ((x1 - x0) / (t1 - t0) - 1.0)});
    });
    segs_.resize(raw.size());
    double right = 0.0;
    for (size_t k = raw.size(); k-- > 0;) {
        const Raw& r = raw[k];
        const double l = r.t1 - r.t0;
        Segment& s = segs_[k];
        s.t0 = r.t0;
        s.t1 = r.t1;
        s.q0 = right + r.A * l + 0.5 * r.B * l * l;
        s.q1 = -r.A;
        s.q2 = -0.5 * r.B;
        right = s.q0;
    }
}

double ShiftPotential::operator()(double t) const
{
    if (segs_.empty()) return 0.0;
    auto it = std::upper_bound(segs_.begin(), segs_.end(), t, [](double v, const Segment& s) { return v < s.t1; });
    if (it == segs_.end()) return 0.0;
    const double u = t - it->t0;
    return it->q0 + u * (it->q1 + u * it->q2);
}

double ShiftPotential::primitive(const Segment& s, double t) const
{
    const double u = t - s.t0;
    return u * (s.q0 + u * (s.q1 / 2.0 + u * s.q2 / 3.0));
}

double ShiftPotential::integral(double a, double b) const
{
    double total = 0.0;
    auto it = std::upper_bound(segs_.begin(), segs_.end(), a, [](double v, const Segment& s) { return v < s.t1; });
    for (; it != segs_.end() && it->t0 < b; ++it) {
        const double lo = std::max(a, it->t0), hi = std::min(b, it->t1);
        if (hi > lo) total += primitive(*it, hi) - primitive(*it, lo);
    }
    return total;
}

Vector ShiftPotential::cell_integrals(const Grid& grid) const
{
    const Vector e = grid.edges();
    Vector out(grid.n_per_axis);
    for (int j = 0; j < grid.n_per_axis; ++j) out[j] = integral(e[j], e[j + 1]);
    return out;
}

IntervalCostGradient interval_cost_gradient(const LineMeasure& P, const Grid& grid, const Vector& density,
                                            double hint)
{
    const LineMeasure Q = LineMeasure::from_density(grid, density);
    IntervalCostGradient r;
    r.shift = optimal_shift(P, Q, hint);
    r.cost = std::max(shift_cost(P, Q, r.shift), 0.0);
    const ShiftPotential psi(P, Q, r.shift);
    r.gradient = psi.cell_integrals(grid);
    r.gradient_at_lo = psi.at_lo();
    r.gaps = gap_freedoms(P, Q, grid, r.shift);
    return r;
}

std::vector<GapFreedom> gap_freedoms(const LineMeasure& P, const LineMeasure& Q, const Grid& grid, double c)
{
    std::vector<GapFreedom> out;
    const double tol = 1e-11 * std::max(1.0, P.mass() + Q.mass());
    const Vector e = grid.edges();
    auto consider = [&](double a, double b, double sigma) {
        if (!(b > a)) return;
        auto it = std::lower_bound(P.cum.begin(), P.cum.end(), sigma - tol);
        if (it == P.cum.end() || *it > sigma + tol) return;
        const size_t j = static_cast<size_t>(it - P.cum.begin());
        const double xl = j == 0 ? P.lo : P.pieces[j - 1].right;
        const double xr = j == P.pieces.size() ? P.hi : P.pieces[j].left;
        if (!(xr > xl)) return;
        const double used = P.quantile(sigma);
        GapFreedom g;
        g.w_lo = xl - used;
        g.w_hi = xr - used;
        if (a <= Q.lo) g.w_inner = g.w_hi;
        else if (b >= Q.hi) g.w_inner = g.w_lo;
        g.unit_at_lo = 2.0 * (b - a);
        g.unit.resize(grid.n_per_axis);
        for (int k = 0; k < grid.n_per_axis; ++k) {
            // integral over the cell of 2 |[t, inf) cap [a, b]|
            const double e0 = e[k], e1 = e[k + 1];
            double v = (b - a) * std::max(0.0, std::min(e1, a) - e0);
            const double lo = std::max(e0, a), hi = std::min(e1, b);
            if (hi > lo) v += 0.5 * ((b - lo) * (b - lo) - (b - hi) * (b - hi));
            g.unit[k] = 2.0 * v;
        }
        out.push_back(std::move(g));
    };
    double t = Q.lo;
    for (size_t k = 0; k < Q.pieces.size(); ++k) {
        consider(t, Q.pieces[k].left, Q.cum[k] + c);
        t = std::max(t, Q.pieces[k].right);
    }
    consider(t, Q.hi, Q.mass() + c);
    return out;
}

}  // namespace wb2flow
