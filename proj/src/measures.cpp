#include "wb2flow/measures.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wb2flow {

DiscreteMeasure::DiscreteMeasure(GridPtr g, Vector rho) : grid(std::move(g)), density(std::move(rho))
{
    if (!grid) throw std::invalid_argument("measure: null grid");
    if (density.size() != grid->num_cells())
        throw std::invalid_argument("measure: density size does not match grid");
    if ((density.array() < 0.0).any() || !density.allFinite())
        throw std::invalid_argument("measure: density must be finite and nonnegative");
}

double DiscreteMeasure::boundary_moment(const BoundaryGeometry& geom) const
{
    return (geom.dist.array().square() * density.array()).sum() * grid->cell_volume;
}

EnergyFunctional EnergyFunctional::power(double alpha, double lambda)
{
    EnergyFunctional e;
    e.variant = EnergyVariant::Power;
    e.alpha = alpha;
    e.lambda = lambda;
    e.validate();
    return e;
}

EnergyFunctional EnergyFunctional::entropy(double lambda)
{
    EnergyFunctional e;
    e.variant = EnergyVariant::Entropy;
    e.alpha = 1.0;
    e.lambda = lambda;
    e.validate();
    return e;
}

void EnergyFunctional::validate() const
{
    if (variant == EnergyVariant::Power) {
        if (!(alpha > 1.0)) throw std::invalid_argument("energy: alpha must be > 1");
        if (!(lambda >= 0.0)) throw std::invalid_argument("energy: lambda must be >= 0");
    } else if (!(lambda > 0.0)) {
        throw std::invalid_argument("energy: entropy variant needs lambda > 0");
    }
}

namespace {

std::vector<Point> face_samples(const Box& box, int per_face = 65)
{
    std::vector<Point> pts;
    const int d = box.dim();
    if (d == 1) {
        pts.push_back(box.lo);
        pts.push_back(box.hi);
        return pts;
    }
    for (int a = 0; a < d; ++a) {
        const int other = 1 - a;
        for (double face : {box.lo[a], box.hi[a]}) {
            for (int k = 0; k < per_face; ++k) {
                Point p(d);
                p[a] = face;
                p[other] = box.lo[other] + (box.hi[other] - box.lo[other]) * k / (per_face - 1);
                pts.push_back(p);
            }
        }
    }
    return pts;
}

}  // namespace

void EnergyFunctional::validate(const Box& box) const
{
    validate();
    if (!potential || variant != EnergyVariant::Power) return;
    const double la = std::pow(lambda, alpha - 1.0);
    for (const Point& b : face_samples(box)) {
        const double v = potential->value(b);
        if (la - (alpha - 1.0) / alpha * v < -1e-14)
            throw std::invalid_argument("energy: boundary law lambda^(alpha-1) - (alpha-1)V/alpha "
                                        "is negative on the boundary");
    }
}

double evaluate_U(const EnergyFunctional& e, double s)
{
    if (s < 0.0) throw std::domain_error("evaluate_U: negative argument");
    if (e.variant == EnergyVariant::Entropy) {
        if (s == 0.0) return e.lambda;
        return s * std::log(s / e.lambda) - s + e.lambda;
    }
    const double a = e.alpha;
    const double la = std::pow(e.lambda, a - 1.0);
    return (std::pow(s, a) - a * la * s) / (a - 1.0) + std::pow(e.lambda, a);
}

double evaluate_dU(const EnergyFunctional& e, double s)
{
    if (e.variant == EnergyVariant::Entropy) {
        if (s <= 0.0) return -kInfinity;
        return std::log(s / e.lambda);
    }
    const double a = e.alpha;
    return a / (a - 1.0) * (std::pow(std::max(s, 0.0), a - 1.0) - std::pow(e.lambda, a - 1.0));
}

double inverse_dU(const EnergyFunctional& e, double q)
{
    if (e.variant == EnergyVariant::Entropy) return e.lambda * std::exp(q);
    const double a = e.alpha;
    const double base = std::pow(e.lambda, a - 1.0) + (a - 1.0) / a * q;
    return base <= 0.0 ? 0.0 : std::pow(base, 1.0 / (a - 1.0));
}

double boundary_density(const EnergyFunctional& e, const Point& b)
{
    if (!e.potential) return e.lambda;
    return inverse_dU(e, -e.potential->value(b));
}

Vector potential_values(const EnergyFunctional& e, const Grid& grid)
{
    Vector v = Vector::Zero(grid.num_cells());
    if (e.potential)
        for (int i = 0; i < grid.num_cells(); ++i) v[i] = e.potential->value(grid.center(i));
    return v;
}

Matrix potential_gradients(const EnergyFunctional& e, const Grid& grid)
{
    Matrix g = Matrix::Zero(grid.num_cells(), grid.dim);
    if (e.potential)
        for (int i = 0; i < grid.num_cells(); ++i)
            g.row(i) = e.potential->gradient(grid.center(i)).transpose();
    return g;
}

double internal_energy(const EnergyFunctional& e, const DiscreteMeasure& mu)
{
    double sum = 0.0;
    for (int i = 0; i < mu.density.size(); ++i) sum += evaluate_U(e, mu.density[i]);
    return sum * mu.grid->cell_volume;
}

double evaluate_energy(const EnergyFunctional& e, const DiscreteMeasure& mu)
{
    double total = internal_energy(e, mu);
    if (e.potential)
        total += potential_values(e, *mu.grid).dot(mu.density) * mu.grid->cell_volume;
    return total;
}

MassBound mass_bound(const EnergyFunctional& e, double E0, double vol)
{
    if (E0 < 0.0) throw std::invalid_argument("mass_bound: E0 must be >= 0");
    MassBound b;
    if (e.variant == EnergyVariant::Entropy) {
        // s <= U(s) for s >= e^2 lambda
        b.l1 = E0 + std::exp(2.0) * e.lambda * vol;
        b.lalpha = b.l1;
        b.m_inf = b.l1;
        return b;
    }
    const double a = e.alpha;
    if (e.lambda == 0.0) {
        b.lalpha = (a - 1.0) * E0;
    } else {
        // Young with eps = 1/(2 a lambda^(a-1)): a lambda^(a-1) s <= s^a / 2 + (a-1) 2^(1/(a-1)) lambda^a
        const double la = std::pow(e.lambda, a);
        b.lalpha = 2.0 * (a - 1.0) * (E0 - vol * la + vol * la * std::pow(2.0, 1.0 / (a - 1.0)));
    }
    b.l1 = std::pow(vol, 1.0 - 1.0 / a) * std::pow(b.lalpha, 1.0 / a);
    b.m_inf = std::max(b.lalpha, b.l1);
    return b;
}

DiscreteMeasure pushforward_perturb(const DiscreteMeasure& mu,
                                    const std::function<double(double)>& phi,
                                    const std::function<double(double)>& dphi, double t)
{
    const Grid& g = *mu.grid;
    if (g.dim != 1) throw std::invalid_argument("pushforward_perturb: 1D grids only");
    if (t == 0.0) return mu;

    const double lo = g.extent.lo[0], hi = g.extent.hi[0];
    const int samples = 8192;
    double max_dphi = 0.0;
    for (int k = 0; k <= samples; ++k)
        max_dphi = std::max(max_dphi, std::abs(dphi(lo + (hi - lo) * k / samples)));
    if (std::abs(t) * max_dphi >= 1.0)
        throw std::invalid_argument("pushforward_perturb: |t| max|Phi'| must be < 1");
    // Phi must vanish on the two boundary-adjacent cells
    for (int k = 0; k <= 64; ++k) {
        const double s = g.h[0] * k / 64.0;
        if (std::abs(phi(lo + s)) > 1e-14 || std::abs(phi(hi - s)) > 1e-14)
            throw std::invalid_argument("pushforward_perturb: Phi must vanish near the boundary");
    }

    const Vector edges = g.edges();
    auto map = [&](double x) { return x + t * phi(x); };
    auto preimage = [&](double y) {
        double a = lo, b = hi;
        for (int it = 0; it < 200 && b - a > 1e-16; ++it) {
            const double m = 0.5 * (a + b);
            (map(m) < y ? a : b) = m;
        }
        return 0.5 * (a + b);
    };
    // cumulative mass of mu from lo to x
    auto cum = [&](double x) {
        const double h = g.h[0];
        const int k = std::clamp(static_cast<int>(std::floor((x - lo) / h)), 0, g.n_per_axis - 1);
        double m = mu.density.head(k).sum() * h;
        return m + mu.density[k] * (x - edges[k]);
    };

    Vector out(g.num_cells());
    double prev = 0.0;
    for (int k = 0; k < g.n_per_axis; ++k) {
        const double next = k + 1 == g.n_per_axis ? cum(hi) : cum(preimage(edges[k + 1]));
        out[k] = std::max(next - prev, 0.0) / g.h[0];
        prev = next;
    }
    return DiscreteMeasure(mu.grid, out);
}

double slope_lower_bound(const EnergyFunctional& e, const DiscreteMeasure& mu)
{
    return slope_lower_bound(e, mu, [&e](const Point& b) { return boundary_density(e, b); });
}

Matrix flux_field(const EnergyFunctional& e, const DiscreteMeasure& mu,
                  const std::function<double(const Point&)>& boundary_rho)
{
    const Grid& g = *mu.grid;
    const double p = e.exponent();
    const int n = g.n_per_axis;
    Vector u(g.num_cells());
    for (int i = 0; i < u.size(); ++i) u[i] = std::pow(mu.density[i], p);
    const Matrix gradV = potential_gradients(e, g);

    Matrix flux(g.num_cells(), g.dim);
    for (int i = 0; i < g.num_cells(); ++i) {
        const auto idx = g.axis_index(i);
        for (int a = 0; a < g.dim; ++a) {
            const double h = g.h[a];
            auto neighbour = [&](int shift) {
                auto j = idx;
                j[a] += shift;
                return g.cell_index(j[0], j[1]);
            };
            auto face = [&](bool upper) {
                Point b = g.center(i);
                b[a] = upper ? g.extent.hi[a] : g.extent.lo[a];
                return std::pow(boundary_rho(b), p);
            };
            double du;
            if (idx[a] == 0)
                du = (u[neighbour(1)] - face(false)) / (1.5 * h);
            else if (idx[a] == n - 1)
                du = (face(true) - u[neighbour(-1)]) / (1.5 * h);
            else
                du = (u[neighbour(1)] - u[neighbour(-1)]) / (2.0 * h);
            flux(i, a) = du + mu.density[i] * gradV(i, a);
        }
    }
    return flux;
}

double slope_lower_bound(const EnergyFunctional& e, const DiscreteMeasure& mu,
                         const std::function<double(const Point&)>& boundary_rho)
{
    const Matrix flux = flux_field(e, mu, boundary_rho);
    double total = 0.0;
    for (int i = 0; i < flux.rows(); ++i) {
        const double sq = flux.row(i).squaredNorm();
        if (mu.density[i] == 0.0) {
            if (sq != 0.0) return kInfinity;
            continue;
        }
        total += sq / mu.density[i];
    }
    return total * mu.grid->cell_volume;
}

}  // namespace wb2flow
