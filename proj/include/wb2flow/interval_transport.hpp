#pragma once

#include "wb2flow/measures.hpp"

#include <functional>
#include <vector>

namespace wb2flow {

/// Mass spread uniformly over [left, right]; an atom when left == right.
struct LinePiece {
    double mass;
    double left;
    double right;
};

/// A nonnegative measure on the segment [lo, hi] as ordered pieces.
/// Gaps between pieces carry no mass.
struct LineMeasure {
    double lo = 0.0;
    double hi = 1.0;
    std::vector<LinePiece> pieces;
    std::vector<double> cum;  // cumulative mass, size pieces + 1

    static LineMeasure from_density(const Grid& grid, const Vector& density);
    static LineMeasure from_measure(const DiscreteMeasure& mu);
    static LineMeasure from_atoms(double lo, double hi, const Vector& positions, const Vector& masses);

    double mass() const { return cum.back(); }
    /// Right-continuous quantile, equal to lo below 0 and hi at or above the mass.
    double quantile(double s) const;

private:
    void finish();
};

// In mass coordinates the boundary transport pairs X(s) with Y(s - c), where X
// and Y are the extended quantiles of the two measures; the squared distance
// is the minimum over the shift c of the integral of (X(s) - Y(s - c))^2.

double shift_cost(const LineMeasure& P, const LineMeasure& Q, double c);
/// Right derivative of shift_cost in c.
double shift_slope(const LineMeasure& P, const LineMeasure& Q, double c);
/// Minimizing shift; `hint` (if finite) seeds the bracket.
double optimal_shift(const LineMeasure& P, const LineMeasure& Q,
                     double hint = std::numeric_limits<double>::quiet_NaN());
double interval_wb2_squared(const LineMeasure& P, const LineMeasure& Q);

/// Visits the intervals of s on which X(s) and Y(s - c) are both affine.
/// Arguments: s0, s1, X(s0+), X(s1-), Y(s0-c+), Y(s1-c-).
using CouplingVisitor = std::function<void(double, double, double, double, double, double)>;
void for_each_coupling_interval(const LineMeasure& P, const LineMeasure& Q, double c,
                                const CouplingVisitor& visit);

struct ReservoirExchange {
    double to_boundary = 0.0;    // mass of P sent to the boundary
    double from_boundary = 0.0;  // mass of Q drawn from the boundary
};
ReservoirExchange reservoir_exchange(const LineMeasure& P, const LineMeasure& Q, double c);

/// Derivative of the shifted cost with respect to the density of Q: a
/// piecewise quadratic function on [lo, hi] vanishing at hi.
class ShiftPotential {
public:
    ShiftPotential(const LineMeasure& P, const LineMeasure& Q, double c);

    double operator()(double t) const;
    double integral(double a, double b) const;
    /// Value at lo; the right derivative of the cost in c.
    double at_lo() const { return segs_.empty() ? 0.0 : segs_.front().q0; }

    /// Integral over each cell of a 1D grid.
    Vector cell_integrals(const Grid& grid) const;

private:
    struct Segment {
        double t0, t1;
        double q0, q1, q2;  // psi(t) = q0 + q1 (t - t0) + q2 (t - t0)^2
    };
    double primitive(const Segment& s, double t) const;
    std::vector<Segment> segs_;
};

/// When the shift puts a gap of the target on a jump of the source quantile,
/// the derivative in the target density is not unique. The admissible ones are
/// base + sum_k w_k unit_k with w_k in [w_lo, w_hi]; the value at lo must vanish
/// for the shift to stay optimal.
struct GapFreedom {
    Vector unit;              // cell integrals of the change for a unit shift of x on the gap
    double unit_at_lo = 0.0;  // its value at lo
    double w_lo = 0.0;
    double w_hi = 0.0;
    double w_inner = 0.0;     // mass stays inside: supplied by the nearest source mass
};

std::vector<GapFreedom> gap_freedoms(const LineMeasure& P, const LineMeasure& Q, const Grid& grid, double c);

/// Cost, optimal shift and gradient with respect to the target cell densities.
struct IntervalCostGradient {
    double cost = 0.0;
    double shift = 0.0;
    Vector gradient;
    double gradient_at_lo = 0.0;
    std::vector<GapFreedom> gaps;
};

IntervalCostGradient interval_cost_gradient(const LineMeasure& P, const Grid& grid, const Vector& density,
                                            double hint = std::numeric_limits<double>::quiet_NaN());

}  // namespace wb2flow
