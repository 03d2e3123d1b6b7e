#pragma once

#include "wb2flow/jko.hpp"

#include <vector>

namespace wb2flow {

struct OracleConfig {
    GridPtr grid;
    EnergyFunctional energy;
    double t_end = 0.0;
    double cfl_safety = 0.5;
    std::vector<double> output_times;

    void validate() const;
};

struct OracleRun {
    std::vector<double> times;
    std::vector<DiscreteMeasure> solutions;
    double clipped_mass = 0.0;
    long steps = 0;
    /// Total mass that entered through the boundary up to each output time.
    std::vector<double> boundary_inflow;
};

/// Explicit conservative scheme for d_t rho = lap rho^a + div(rho grad V) with
/// Dirichlet face values. Throws std::runtime_error on blow-up.
OracleRun oracle_solve(const OracleConfig& cfg, const DiscreteMeasure& rho0);

/// Five compactly supported bumps (tensor products in 2D).
std::vector<TestFunction> bump_basket(int dim);

/// Per-test-function data used to evaluate weak residuals on a grid.
struct WeakForm {
    Vector value;      // cell integrals of zeta
    Vector laplacian;  // cell integrals of lap zeta
    Vector drift;      // cell integrals of grad V . grad zeta

    WeakForm(const Grid& g, const TestFunction& zeta, const EnergyFunctional& e);
    /// int rho^a lap zeta - int rho grad V . grad zeta
    double flux(const EnergyFunctional& e, const DiscreteMeasure& mu) const;
};

/// max over the basket of |int rho(t2) zeta - int rho(t1) zeta - int_{t1}^{t2} flux dt|,
/// time integral by the trapezoid rule over the stored samples.
double weak_residual(const EnergyFunctional& e, const std::vector<double>& times,
                     const std::vector<DiscreteMeasure>& solutions, const std::vector<TestFunction>& basket,
                     double t1, double t2);

/// Same for a piecewise-constant-in-time trajectory, integrated exactly in time.
double weak_residual(const EnergyFunctional& e, const JkoTrajectory& traj,
                     const std::vector<TestFunction>& basket, double t1, double t2);

}  // namespace wb2flow
