#include "wb2flow/geometry.hpp"

#include <limits>
#include <stdexcept>

namespace wb2flow {

Box Box::unit(int dim)
{
    return Box{Vector::Zero(dim), Vector::Ones(dim)};
}

std::array<int, 2> Grid::axis_index(int cell) const
{
    if (dim == 1) return {cell, 0};
    return {cell / n_per_axis, cell % n_per_axis};
}

int Grid::cell_index(int i0, int i1) const
{
    return dim == 1 ? i0 : i0 * n_per_axis + i1;
}

Vector Grid::edges() const
{
    Vector e(n_per_axis + 1);
    for (int k = 0; k <= n_per_axis; ++k) e[k] = extent.lo[0] + k * h[0];
    e[n_per_axis] = extent.hi[0];
    return e;
}

bool Grid::same_as(const Grid& other) const
{
    return dim == other.dim && n_per_axis == other.n_per_axis &&
           extent.lo.isApprox(other.extent.lo, 1e-12) &&
           extent.hi.isApprox(other.extent.hi, 1e-12);
}

GridPtr build_grid(int dim, const Box& extent, int n_per_axis)
{
    if (dim != 1 && dim != 2) throw std::invalid_argument("grid: dim must be 1 or 2");
    if (extent.dim() != dim) throw std::invalid_argument("grid: extent dimension mismatch");
    if (n_per_axis < 2) throw std::invalid_argument("grid: n_per_axis must be >= 2");
    if (((extent.hi - extent.lo).array() <= 0.0).any())
        throw std::invalid_argument("grid: extent must have positive width on every axis");

    auto g = std::make_shared<Grid>();
    g->dim = dim;
    g->extent = extent;
    g->n_per_axis = n_per_axis;
    g->h = (extent.hi - extent.lo) / n_per_axis;
    g->cell_volume = g->h.prod();

    const int cells = dim == 1 ? n_per_axis : n_per_axis * n_per_axis;
    g->centers.resize(cells, dim);
    for (int c = 0; c < cells; ++c) {
        const auto idx = g->axis_index(c);
        for (int a = 0; a < dim; ++a)
            g->centers(c, a) = extent.lo[a] + (idx[a] + 0.5) * g->h[a];
    }
    return g;
}

double boundary_distance(const Box& box, const Point& x, Point* proj)
{
    double best = std::numeric_limits<double>::infinity();
    int best_axis = 0;
    double best_face = 0.0;
    for (int a = 0; a < box.dim(); ++a) {
        const double dlo = x[a] - box.lo[a];
        const double dhi = box.hi[a] - x[a];
        if (dlo < best) { best = dlo; best_axis = a; best_face = box.lo[a]; }
        if (dhi < best) { best = dhi; best_axis = a; best_face = box.hi[a]; }
    }
    if (proj) {
        *proj = x;
        (*proj)[best_axis] = best_face;
    }
    return best;
}

BoundaryGeometry boundary_geometry(const Grid& grid)
{
    BoundaryGeometry geom;
    const int n = grid.num_cells();
    geom.dist.resize(n);
    geom.proj.resize(n, grid.dim);
    geom.diam = grid.extent.diameter();
    Point p;
    for (int i = 0; i < n; ++i) {
        geom.dist[i] = boundary_distance(grid.extent, grid.center(i), &p);
        geom.proj.row(i) = p.transpose();
    }
    return geom;
}

std::vector<int> boundary_band(const BoundaryGeometry& geom, double r)
{
    if (!(r > 0.0)) throw std::invalid_argument("boundary_band: r must be positive");
    std::vector<int> out;
    for (int i = 0; i < geom.dist.size(); ++i)
        if (geom.dist[i] < r) out.push_back(i);
    return out;
}

}  // namespace wb2flow
