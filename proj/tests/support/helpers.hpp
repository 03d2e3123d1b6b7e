#pragma once

#include "wb2flow/transport.hpp"

#include <cmath>
#include <functional>
#include <random>

namespace testsupport {

using namespace wb2flow;

inline GridPtr unit_grid(int n, int dim = 1) { return build_grid(dim, Box::unit(dim), n); }

inline DiscreteMeasure from_function(const GridPtr& g, const std::function<double(const Point&)>& f)
{
    Vector rho(g->num_cells());
    for (int i = 0; i < rho.size(); ++i) rho[i] = f(g->center(i));
    return DiscreteMeasure(g, rho);
}

inline DiscreteMeasure constant(const GridPtr& g, double v)
{
    return DiscreteMeasure(g, Vector::Constant(g->num_cells(), v));
}

/// Random density with some zero cells; masses of order one.
inline DiscreteMeasure random_measure(const GridPtr& g, std::mt19937_64& rng, double zero_prob = 0.2)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vector rho(g->num_cells());
    for (int i = 0; i < rho.size(); ++i) rho[i] = u(rng) < zero_prob ? 0.0 : 2.0 * u(rng);
    return DiscreteMeasure(g, rho);
}

inline double l1(const DiscreteMeasure& a, const DiscreteMeasure& b)
{
    return (a.density - b.density).cwiseAbs().sum() * a.grid->cell_volume;
}

inline double sin_desk(const Point& p) { return 1.0 + 0.5 * std::sin(2.0 * M_PI * p[0]); }

}  // namespace testsupport
