#pragma once

#include "wb2flow/geometry.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <string>

namespace wb2flow {

/// Piecewise-constant nonnegative density on a grid.
struct DiscreteMeasure {
    GridPtr grid;
    Vector density;

    DiscreteMeasure() = default;
    DiscreteMeasure(GridPtr g, Vector rho);

    Vector masses() const { return density * grid->cell_volume; }
    double total_mass() const { return density.sum() * grid->cell_volume; }
    double boundary_moment(const BoundaryGeometry& geom) const;
};

/// External potential V with its gradient.
struct Potential {
    std::function<double(const Point&)> value;
    std::function<Point(const Point&)> gradient;
    std::string expression;  // source text, kept for manifests
};

enum class EnergyVariant { Power, Entropy };

struct EnergyFunctional {
    EnergyVariant variant = EnergyVariant::Power;
    double alpha = 2.0;
    double lambda = 0.0;
    std::optional<Potential> potential;

    static EnergyFunctional power(double alpha, double lambda);
    static EnergyFunctional entropy(double lambda);

    /// Exponent of the diffusion nonlinearity (1 for the entropy variant).
    double exponent() const { return variant == EnergyVariant::Power ? alpha : 1.0; }

    /// Throws std::invalid_argument when the parameters are inadmissible.
    void validate() const;
    /// Also checks the boundary law on the faces of `box` when a potential is set.
    void validate(const Box& box) const;
};

constexpr double kInfinity = std::numeric_limits<double>::infinity();

double evaluate_U(const EnergyFunctional& e, double s);
double evaluate_dU(const EnergyFunctional& e, double s);
/// Inverse of U' on its range; returns 0 when q is below U'(0).
double inverse_dU(const EnergyFunctional& e, double q);

/// Density prescribed at a boundary point (lambda, or the drift boundary law).
double boundary_density(const EnergyFunctional& e, const Point& b);

/// V sampled at cell centres (zeros when there is no potential).
Vector potential_values(const EnergyFunctional& e, const Grid& grid);
Matrix potential_gradients(const EnergyFunctional& e, const Grid& grid);

double evaluate_energy(const EnergyFunctional& e, const DiscreteMeasure& mu);
/// Internal part only, without the potential term.
double internal_energy(const EnergyFunctional& e, const DiscreteMeasure& mu);

struct MassBound {
    double lalpha = 0.0;  // bound on the integral of rho^alpha
    double l1 = 0.0;      // bound on the integral of rho
    double m_inf = 0.0;
};

MassBound mass_bound(const EnergyFunctional& e, double E0, double domain_volume);

/// (id + t Phi)_# mu on a 1D grid, resampled by exact interval intersection.
DiscreteMeasure pushforward_perturb(const DiscreteMeasure& mu,
                                    const std::function<double(double)>& phi,
                                    const std::function<double(double)>& dphi,
                                    double t);

/// Per-cell grad rho^alpha + rho grad V (rho^alpha -> rho for the entropy
/// variant): centred differences inside, one-sided against the face value
/// `boundary_rho` at boundary-adjacent cells.
Matrix flux_field(const EnergyFunctional& e, const DiscreteMeasure& mu,
                  const std::function<double(const Point&)>& boundary_rho);

/// Discrete integral of |grad rho^alpha + rho grad V|^2 / rho (rho^alpha -> rho
/// for the entropy variant). Returns kInfinity when a zero cell carries flux.
double slope_lower_bound(const EnergyFunctional& e, const DiscreteMeasure& mu);
/// Same, with the face density supplied explicitly.
double slope_lower_bound(const EnergyFunctional& e, const DiscreteMeasure& mu,
                         const std::function<double(const Point&)>& boundary_rho);

}  // namespace wb2flow
