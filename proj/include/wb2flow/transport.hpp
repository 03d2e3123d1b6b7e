#pragma once

#include "wb2flow/measures.hpp"

#include <vector>

namespace wb2flow {

/// Point masses in a box; the boundary of the box is the reservoir.
struct AtomList {
    Matrix positions;  // count x dim
    Vector masses;

    int size() const { return static_cast<int>(masses.size()); }
    static AtomList from_measure(const DiscreteMeasure& mu);
};

struct TransportProblem {
    Box domain;
    AtomList source;
    AtomList target;

    static TransportProblem from_measures(const DiscreteMeasure& mu, const DiscreteMeasure& nu);

    double cost(int i, int j) const;          // |x_i - y_j|^2
    double source_to_reservoir(int i) const;  // d(x_i)^2
    double reservoir_to_target(int j) const;  // d(y_j)^2
};

struct Flow {
    int src;
    int dst;
    double mass;
};

struct TransportPlan {
    std::vector<Flow> interior;
    Vector to_reservoir;
    Vector from_reservoir;
    double total_cost = 0.0;

    /// Cost recomputed from the flows.
    double recompute_cost(const TransportProblem& p) const;
    Vector source_marginal() const;  // sized like to_reservoir
    Vector target_marginal() const;  // sized like from_reservoir
};

/// Kantorovich potentials with the reservoir potential fixed to 0.
struct DualPotentials {
    Vector phi_source;
    Vector psi_target;
};

struct ExactSolution {
    TransportPlan plan;
    DualPotentials duals;
    double cost = 0.0;
};

constexpr double kDefaultCostScale = 1e12;

ExactSolution solve_exact(const TransportProblem& p, double cost_scale = kDefaultCostScale);

/// Balanced quadratic transport (no reservoir); masses must agree.
double solve_balanced_w2_squared(const TransportProblem& p, double cost_scale = kDefaultCostScale);

struct EntropicSolution {
    TransportPlan plan;           // rounded to be exactly feasible
    double cost = 0.0;            // cost of the rounded plan, >= exact optimum
    double marginal_violation = 0.0;  // before rounding
    int iterations = 0;
    bool converged = false;
};

EntropicSolution solve_entropic(const TransportProblem& p, double epsilon, int max_iters, double tol);

enum class TransportModel {
    CellCenters,       // cell masses concentrated at the centres
    PiecewiseConstant  // densities uniform on cells (1D only)
};

double wb2_squared(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                   TransportModel model = TransportModel::CellCenters);
double wb2_distance(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                    TransportModel model = TransportModel::CellCenters);

struct DualityCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    bool pass = false;
};

/// |int zeta dmu - int zeta dnu| <= Lip(zeta) sqrt(mu(Omega) + nu(Omega)) Wb2(mu, nu).
DualityCheck duality_test(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                          const Vector& zeta, double lipschitz);

}  // namespace wb2flow
