#include "wb2flow/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wb2flow {

void OracleConfig::validate() const
{
    if (!grid) throw std::invalid_argument("oracle: missing grid");
    energy.validate(grid->extent);
    if (!(t_end > 0.0)) throw std::invalid_argument("oracle: t_end must be positive");
    if (!(cfl_safety > 0.0 && cfl_safety <= 1.0)) throw std::invalid_argument("oracle: cfl_safety must be in (0, 1]");
    for (double t : output_times)
        if (!(t >= 0.0 && t <= t_end)) throw std::invalid_argument("oracle: output time outside [0, t_end]");
}

OracleRun oracle_solve(const OracleConfig& cfg, const DiscreteMeasure& rho0)
{
    cfg.validate();
    const Grid& g = *cfg.grid;
    const EnergyFunctional& e = cfg.energy;
    if (!g.same_as(*rho0.grid)) throw std::invalid_argument("oracle: initial density on a different grid");
    const int n = g.n_per_axis, cells = g.num_cells(), dim = g.dim;
    const double p = e.exponent();

    // Face data per (cell, axis, side): boundary density and the drift velocity -dV/dx_a.
    const int faces = cells * dim * 2;
    std::vector<double> face_rho(faces, 0.0), face_w(faces, 0.0);
    auto face_id = [&](int c, int a, int side) { return (c * dim + a) * 2 + side; };
    for (int c = 0; c < cells; ++c) {
        const auto idx = g.axis_index(c);
        for (int a = 0; a < dim; ++a)
            for (int side = 0; side < 2; ++side) {
                Point x = g.center(c);
                x[a] += (side ? 0.5 : -0.5) * g.h[a];
                const bool boundary = side ? idx[a] == n - 1 : idx[a] == 0;
                if (boundary) {
                    x[a] = side ? g.extent.hi[a] : g.extent.lo[a];
                    face_rho[face_id(c, a, side)] = boundary_density(e, x);
                }
                if (e.potential) face_w[face_id(c, a, side)] = -e.potential->gradient(x)[a];
            }
    }
    double max_gradV = 0.0;
    for (double w : face_w) max_gradV = std::max(max_gradV, std::abs(w));
    double max_face_rho = 0.0;
    for (double r : face_rho) max_face_rho = std::max(max_face_rho, r);

    std::vector<double> outputs = cfg.output_times;
    std::sort(outputs.begin(), outputs.end());

    Vector rho = rho0.density;
    const double guard = 1e3 * (rho.maxCoeff() + e.lambda + 1.0);
    Vector u(cells), drho(cells);
    OracleRun run;
    double t = 0.0, inflow = 0.0;
    size_t next = 0;
    auto record = [&]() {
        while (next < outputs.size() && outputs[next] <= t + 1e-14 * std::max(1.0, t)) {
            run.times.push_back(outputs[next]);
            run.solutions.emplace_back(cfg.grid, rho);
            run.boundary_inflow.push_back(inflow);
            ++next;
        }
    };
    record();

    const double h2 = g.h.minCoeff() * g.h.minCoeff();
    while (next < outputs.size()) {
        const double rmax = std::max(rho.maxCoeff(), max_face_rho);
        const double diff = p == 1.0 ? 1.0 : p * std::pow(rmax, p - 1.0);
        double dt = cfg.cfl_safety * h2 / (2.0 * dim * diff + g.h.minCoeff() * max_gradV + 1e-12);
        dt = std::min(dt, outputs[next] - t);

        for (int c = 0; c < cells; ++c) u[c] = std::pow(rho[c], p);
        drho.setZero();
        double step_inflow = 0.0;
        for (int c = 0; c < cells; ++c) {
            const auto idx = g.axis_index(c);
            for (int a = 0; a < dim; ++a) {
                const double h = g.h[a];
                // upper face of c on axis a; net flux into c from the + side
                const bool top = idx[a] == n - 1;
                const int f = face_id(c, a, 1);
                double diffusive, advective;
                const double w = face_w[f];
                if (top) {
                    const double ub = std::pow(face_rho[f], p);
                    diffusive = 2.0 * (ub - u[c]) / h;
                    advective = -w * (w > 0.0 ? rho[c] : face_rho[f]);
                    const double in = (diffusive + advective) / h;
                    drho[c] += in;
                    step_inflow += in;
                } else {
                    auto j = idx;
                    j[a] += 1;
                    const int nb = g.cell_index(j[0], j[1]);
                    diffusive = (u[nb] - u[c]) / h;
                    advective = -w * (w > 0.0 ? rho[c] : rho[nb]);
                    const double flow = (diffusive + advective) / h;
                    drho[c] += flow;
                    drho[nb] -= flow;
                }
                if (idx[a] == 0) {
                    const int fl = face_id(c, a, 0);
                    const double ub = std::pow(face_rho[fl], p);
                    const double wl = face_w[fl];
                    const double in = (2.0 * (ub - u[c]) / h + wl * (wl > 0.0 ? face_rho[fl] : rho[c])) / h;
                    drho[c] += in;
                    step_inflow += in;
                }
            }
        }
        rho += dt * drho;
        inflow += dt * step_inflow * g.cell_volume;
        for (int c = 0; c < cells; ++c)
            if (rho[c] < 0.0) {
                run.clipped_mass += -rho[c] * g.cell_volume;
                rho[c] = 0.0;
            }
        if (!(rho.maxCoeff() <= guard)) throw std::runtime_error("oracle: blow-up guard triggered");
        t += dt;
        ++run.steps;
        if (outputs[next] - t <= 1e-14 * std::max(1.0, t)) t = outputs[next];
        record();
    }
    return run;
}

namespace {

TestFunction bump_1d(double a, double b)
{
    const double A = 1.0 / std::pow(0.5 * (b - a), 8);
    TestFunction z;
    char name[64];
    std::snprintf(name, sizeof name, "bump(%g,%g)", a, b);
    z.name = name;
    z.value = [=](const Point& x) {
        if (x[0] <= a || x[0] >= b) return 0.0;
        const double w = (x[0] - a) * (b - x[0]);
        return A * std::pow(w, 4);
    };
    z.gradient = [=](const Point& x) {
        Point g = Point::Zero(1);
        if (x[0] <= a || x[0] >= b) return g;
        const double w = (x[0] - a) * (b - x[0]), dw = a + b - 2.0 * x[0];
        g[0] = 4.0 * A * w * w * w * dw;
        return g;
    };
    z.laplacian = [=](const Point& x) {
        if (x[0] <= a || x[0] >= b) return 0.0;
        const double w = (x[0] - a) * (b - x[0]), dw = a + b - 2.0 * x[0];
        return A * (12.0 * w * w * dw * dw - 8.0 * w * w * w);
    };
    return z;
}

TestFunction product(const TestFunction& f, const TestFunction& g)
{
    TestFunction z;
    z.name = f.name + "x" + g.name;
    auto px = [](const Point& p) { return Point::Constant(1, p[0]); };
    auto py = [](const Point& p) { return Point::Constant(1, p[1]); };
    z.value = [=](const Point& p) { return f.value(px(p)) * g.value(py(p)); };
    z.gradient = [=](const Point& p) {
        Point r(2);
        r[0] = f.gradient(px(p))[0] * g.value(py(p));
        r[1] = f.value(px(p)) * g.gradient(py(p))[0];
        return r;
    };
    z.laplacian = [=](const Point& p) {
        return f.laplacian(px(p)) * g.value(py(p)) + f.value(px(p)) * g.laplacian(py(p));
    };
    return z;
}

const double kGaussX[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831, 0.9061798459386640};
const double kGaussW[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665,
                           0.2369268850561891};

// Tensor Gauss rule over a cell.
template <class F>
double cell_quadrature(const Grid& g, int c, F&& f)
{
    const Point x0 = g.center(c);
    double total = 0.0;
    if (g.dim == 1) {
        Point x(1);
        for (int k = 0; k < 5; ++k) {
            x[0] = x0[0] + 0.5 * g.h[0] * kGaussX[k];
            total += 0.5 * kGaussW[k] * f(x);
        }
        return total * g.h[0];
    }
    Point x(2);
    for (int k = 0; k < 5; ++k)
        for (int l = 0; l < 5; ++l) {
            x[0] = x0[0] + 0.5 * g.h[0] * kGaussX[k];
            x[1] = x0[1] + 0.5 * g.h[1] * kGaussX[l];
            total += 0.25 * kGaussW[k] * kGaussW[l] * f(x);
        }
    return total * g.cell_volume;
}

}  // namespace

std::vector<TestFunction> bump_basket(int dim)
{
    const std::pair<double, double> supports[5] = {{0.1, 0.9}, {0.02, 0.5}, {0.5, 0.98}, {0.2, 0.6}, {0.35, 0.85}};
    std::vector<TestFunction> out;
    for (int k = 0; k < 5; ++k) {
        const TestFunction f = bump_1d(supports[k].first, supports[k].second);
        if (dim == 1) {
            out.push_back(f);
        } else {
            const auto& s = supports[(k + 2) % 5];
            out.push_back(product(f, bump_1d(s.first, s.second)));
        }
    }
    return out;
}

WeakForm::WeakForm(const Grid& g, const TestFunction& zeta, const EnergyFunctional& e)
{
    const int n = g.num_cells();
    value.resize(n);
    laplacian.resize(n);
    drift = Vector::Zero(n);
    const Vector edges = g.dim == 1 ? g.edges() : Vector();
    for (int c = 0; c < n; ++c) {
        value[c] = cell_quadrature(g, c, zeta.value);
        if (g.dim == 1) {
            laplacian[c] = zeta.gradient(Point::Constant(1, edges[c + 1]))[0] -
                           zeta.gradient(Point::Constant(1, edges[c]))[0];
        } else {
            laplacian[c] = cell_quadrature(g, c, zeta.laplacian);
        }
        if (e.potential) {
            drift[c] = cell_quadrature(g, c, [&](const Point& x) {
                return e.potential->gradient(x).dot(zeta.gradient(x));
            });
        }
    }
}

double WeakForm::flux(const EnergyFunctional& e, const DiscreteMeasure& mu) const
{
    const double p = e.exponent();
    double total = 0.0;
    for (int c = 0; c < mu.density.size(); ++c)
        total += std::pow(mu.density[c], p) * laplacian[c] - mu.density[c] * drift[c];
    return total;
}

double weak_residual(const EnergyFunctional& e, const std::vector<double>& times,
                     const std::vector<DiscreteMeasure>& solutions, const std::vector<TestFunction>& basket,
                     double t1, double t2)
{
    if (!(t1 < t2)) throw std::invalid_argument("weak_residual: need t1 < t2");
    auto find = [&](double t) {
        for (size_t k = 0; k < times.size(); ++k)
            if (std::abs(times[k] - t) <= 1e-12 * std::max(1.0, t)) return k;
        throw std::invalid_argument("weak_residual: time not among the stored samples");
    };
    const size_t k1 = find(t1), k2 = find(t2);
    const Grid& g = *solutions[k1].grid;
    double worst = 0.0;
    for (const TestFunction& z : basket) {
        const WeakForm w(g, z, e);
        const double lhs = w.value.dot(solutions[k2].density) - w.value.dot(solutions[k1].density);
        double rhs = 0.0;
        for (size_t k = k1; k < k2; ++k)
            rhs += 0.5 * (times[k + 1] - times[k]) * (w.flux(e, solutions[k]) + w.flux(e, solutions[k + 1]));
        worst = std::max(worst, std::abs(lhs - rhs));
    }
    return worst;
}

double weak_residual(const EnergyFunctional& e, const JkoTrajectory& traj, const std::vector<TestFunction>& basket,
                     double t1, double t2)
{
    if (!(t1 < t2)) throw std::invalid_argument("weak_residual: need t1 < t2");
    const Grid& g = *traj.steps.front().grid;
    const double tau = traj.tau;
    double worst = 0.0;
    for (const TestFunction& z : basket) {
        const WeakForm w(g, z, e);
        const double lhs = w.value.dot(sample_at(traj, t2).density) - w.value.dot(sample_at(traj, t1).density);
        double rhs = 0.0;
        for (int n = 1; n <= traj.n_steps(); ++n) {
            const double a = std::max(t1, (n - 1) * tau), b = std::min(t2, n * tau);
            if (b > a) rhs += (b - a) * w.flux(e, traj.steps[n]);
        }
        worst = std::max(worst, std::abs(lhs - rhs));
    }
    return worst;
}

}  // namespace wb2flow
