#pragma once

#include <Eigen/Dense>

#include <array>
#include <memory>
#include <vector>

namespace wb2flow {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Point = Eigen::VectorXd;

/// Axis-aligned box [lo, hi] in one or two dimensions.
struct Box {
    Vector lo;
    Vector hi;

    int dim() const { return static_cast<int>(lo.size()); }
    double volume() const { return (hi - lo).prod(); }
    double diameter() const { return (hi - lo).norm(); }

    static Box unit(int dim);
};

/// Uniform cell-centred grid over a box.
///
/// Cells are ordered lexicographically by axis index, so in 2D the cell
/// (i0, i1) has index i0 * n + i1.
struct Grid {
    int dim = 1;
    Box extent;
    int n_per_axis = 0;
    Vector h;        // cell width per axis
    Matrix centers;  // num_cells x dim
    double cell_volume = 0.0;

    int num_cells() const { return static_cast<int>(centers.rows()); }
    Point center(int i) const { return centers.row(i).transpose(); }

    /// Multi-index of a cell (axis order).
    std::array<int, 2> axis_index(int cell) const;
    int cell_index(int i0, int i1 = 0) const;

    /// Cell edges along axis 0 (only meaningful in 1D).
    Vector edges() const;

    bool same_as(const Grid& other) const;
};

using GridPtr = std::shared_ptr<const Grid>;

GridPtr build_grid(int dim, const Box& extent, int n_per_axis);

/// Distance to the boundary and nearest boundary point for every cell.
struct BoundaryGeometry {
    Vector dist;
    Matrix proj;  // num_cells x dim
    double diam = 0.0;
};

/// Distance from `x` to the boundary of the box and its nearest boundary
/// point. Ties go to the lowest axis, then the lower face.
double boundary_distance(const Box& box, const Point& x, Point* proj = nullptr);

BoundaryGeometry boundary_geometry(const Grid& grid);

/// Indices of the cells with dist < r. Throws for r <= 0.
std::vector<int> boundary_band(const BoundaryGeometry& geom, double r);

}  // namespace wb2flow
