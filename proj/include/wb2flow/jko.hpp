#pragma once

#include "wb2flow/interval_transport.hpp"
#include "wb2flow/transport.hpp"

#include <functional>
#include <string>
#include <vector>

namespace wb2flow {

enum class JkoSolver {
    Auto,             // QuasiNewton in 1D, Subgradient otherwise
    QuasiNewton,      // projected L-BFGS, needs the piecewise-constant model
    Subgradient,      // projected subgradient with momentum
    EntropicScaling,  // entropic scaling with a per-cell KL-prox (cell centres)
};

struct JkoConfig {
    double tau = 1e-3;
    int n_steps = 1;
    JkoSolver solver = JkoSolver::Auto;
    /// Auto picks PiecewiseConstant in 1D and CellCenters in 2D.
    std::optional<TransportModel> model;
    double inner_tol = 0.0;  // <= 0: 1e-8 (1 + E(mu0))
    int max_iters = 20000;
    double entropic_epsilon = 0.0;  // <= 0: h^2 / 10
    double step_a = 0.0;            // <= 0: half the largest initial density
    double step_b = 10.0;
    bool entropic_polish = true;  // finish an uncertified entropic answer with the subgradient path

    void validate() const;
};

/// Resolved settings actually used for a run.
struct JkoSettings {
    double tau;
    JkoSolver solver;
    TransportModel model;
    double inner_tol;
    int max_iters;
    double entropic_epsilon;
    double step_a;
    double step_b;
    bool entropic_polish;
};

JkoSettings resolve(const JkoConfig& cfg, const EnergyFunctional& e, const DiscreteMeasure& mu0);

struct StepCertificate {
    double objective = 0.0;  // E + Wb2^2 / (2 tau)
    double gap = 0.0;        // upper bound on objective - min
    double step_cost = 0.0;  // Wb2^2(mu_prev, mu)
    int iterations = 0;
    bool converged = false;
};

/// Objective of one step, G(rho) = E(rho) + Wb2^2(prev, rho) / (2 tau), with a
/// subgradient and a duality-gap certificate.
class StepObjective {
public:
    StepObjective(const EnergyFunctional& e, const DiscreteMeasure& prev, double tau, TransportModel model);

    struct Eval {
        double value = 0.0;
        double cost = 0.0;  // Wb2^2(prev, rho)
        Vector gradient;
        double gap = 0.0;
    };

    Eval evaluate(const Vector& rho) const;
    double lower_bound() const { return lower_; }
    int size() const { return static_cast<int>(potential_.size()); }
    /// Gradient for moves that keep the total mass (the gap stays the general one).
    void set_mass_pinned(bool on) const { pinned_ = on; }
    /// Cell-centre model: search the subdifferential of the cost for a smaller gap.
    void tighten(const Vector& rho, Eval& ev, double tol, int rounds) const;

private:
    double gap_for(const Vector& rho, const Vector& d) const;
    Vector tilted_dual(const Vector& rho, Vector tilt, double* cost) const;

    const EnergyFunctional& e_;
    const DiscreteMeasure& prev_;
    double tau_;
    TransportModel model_;
    Vector potential_;
    double lower_ = 0.0;  // componentwise lower bound on rho
    LineMeasure prev_line_;
    mutable bool pinned_ = false;
    mutable double shift_hint_ = std::numeric_limits<double>::quiet_NaN();
    TransportProblem problem_;
};

struct StepResult {
    DiscreteMeasure measure;
    StepCertificate certificate;
};

StepResult jko_step(const EnergyFunctional& e, const DiscreteMeasure& prev, const JkoSettings& s,
                    const Vector* initial = nullptr);

struct JkoTrajectory {
    std::vector<DiscreteMeasure> steps;  // mu_0 .. mu_n
    std::vector<double> step_costs;      // size n, entry k is Wb2^2(mu_k, mu_{k+1})
    std::vector<double> step_energies;   // size n + 1
    std::vector<StepCertificate> certificates;
    double tau = 0.0;
    double inner_tol = 0.0;
    TransportModel model = TransportModel::CellCenters;

    int n_steps() const { return static_cast<int>(step_costs.size()); }
};

JkoTrajectory run_scheme(const EnergyFunctional& e, const DiscreteMeasure& mu0, const JkoConfig& cfg,
                         const std::function<void(int, const StepCertificate&)>& progress = {});

/// Piecewise-constant interpolation: mu_n with n = ceil(t / tau).
const DiscreteMeasure& sample_at(const JkoTrajectory& traj, double t);

/// Smooth compactly supported test function.
struct TestFunction {
    std::string name;
    std::function<double(const Point&)> value;
    std::function<Point(const Point&)> gradient;
    std::function<double(const Point&)> laplacian;
};

/// Residual of the optimality condition
///   int <grad zeta(y), x - y> dgamma(x, y) + tau int (rho^a lap zeta - rho grad V . grad zeta) = 0
/// with gamma optimal between mu_prev (x) and mu_min (y).
///
/// CellCenters: sums over the exact plan between cell centres. PiecewiseConstant:
/// the first variation of the step objective along the push-forward by
/// id + eps grad zeta, resampled on the grid, times tau; this is the form of the
/// condition that the discrete minimizer satisfies exactly.
double el_residual(const EnergyFunctional& e, const DiscreteMeasure& mu_prev, const DiscreteMeasure& mu_min,
                   double tau, const TestFunction& zeta, TransportModel model);

/// 1D: the same condition with the exact coupling and Gauss quadrature in mass
/// coordinates. Carries an O(h^2) consistency error at the discrete minimizer.
double quadrature_el_residual(const EnergyFunctional& e, const DiscreteMeasure& mu_prev,
                              const DiscreteMeasure& mu_min, double tau, const TestFunction& zeta);

std::string to_string(JkoSolver s);
std::string to_string(TransportModel m);
JkoSolver parse_solver(const std::string& s);
TransportModel parse_model(const std::string& s);

}  // namespace wb2flow
