#pragma once

#include "wb2flow/oracle.hpp"

#include <string>
#include <vector>

namespace wb2flow {

struct CheckRecord {
    std::string name;
    std::string anchor;  // the inequality being tested
    double lhs = 0.0;
    double rhs = 0.0;
    double slack = 0.0;  // allowance available
    double slack_used = 0.0;
    bool pass = true;
    bool skipped = false;
    std::string detail;
};

struct DiagnosticsReport {
    double tau = 0.0;
    double h = 0.0;
    double alpha = 0.0;
    double lambda = 0.0;
    double E0 = 0.0;
    std::string variant;
    std::vector<CheckRecord> records;

    bool all_pass() const;
    const CheckRecord* find(const std::string& name) const;
};

/// Per-step speeds: theta_k = Wb2(mu_k, mu_{k+1}) / tau, v_k = slope bound at mu_{k+1}.
struct SpeedProfile {
    std::vector<double> theta;
    std::vector<double> v_norm;
    std::vector<double> energies;
};

SpeedProfile speed_profile(const EnergyFunctional& e, const JkoTrajectory& traj);

/// Width of the band where step minimizers stay positive, power energy with lambda > 0.
double radius_star(const EnergyFunctional& e, double tau);

/// Allowance C_d (h + tau) (1 + E0) for the continuum inequalities.
double discretization_allowance(const JkoTrajectory& traj, double E0, double C_d = 1.0);

CheckRecord check_energy_monotone(const JkoTrajectory& traj);
CheckRecord check_step_sum(const JkoTrajectory& traj);
CheckRecord check_refined_step_sum(const EnergyFunctional& e, const JkoTrajectory& traj, double eps_disc);
CheckRecord check_holder(const EnergyFunctional& e, const JkoTrajectory& traj);
CheckRecord check_boundary_band(const EnergyFunctional& e, const JkoTrajectory& traj, int max_steps = -1);
CheckRecord check_envelopes(const EnergyFunctional& e, const JkoTrajectory& traj);
CheckRecord check_edi(const EnergyFunctional& e, const JkoTrajectory& traj, const SpeedProfile& sp, double eps_disc);
CheckRecord check_metric_derivative_bound(const EnergyFunctional& e, const JkoTrajectory& traj,
                                          const SpeedProfile& sp, double eps_disc);
CheckRecord check_metric_derivative_converse(const JkoTrajectory& traj, const SpeedProfile& sp);
/// Variant for lambda = 0: |mu'| >= int |grad rho^a|^2 / sqrt(int |grad rho^a|^2 rho).
CheckRecord check_zero_lambda_speed(const EnergyFunctional& e, const JkoTrajectory& traj, double eps_disc);
CheckRecord check_mass_bounds(const EnergyFunctional& e, const JkoTrajectory& traj);
CheckRecord check_weak_solution_rate(const EnergyFunctional& e, const std::vector<const JkoTrajectory*>& runs,
                                     const std::vector<TestFunction>& basket, double t1, double t2);
CheckRecord compare_to_oracle(const JkoTrajectory& traj, const OracleRun& oracle, const std::vector<double>& times,
                              double tolerance);

/// Largest raw envelope violation over all steps and cells (no slack), for refinement studies.
double envelope_violation(const EnergyFunctional& e, const JkoTrajectory& traj);

/// L1 distance between a coarse density and a nested finer one, on the fine grid.
double nested_l1(const DiscreteMeasure& coarse, const DiscreteMeasure& fine);

struct DiagnosticsOptions {
    double C_d = 1.0;
    std::vector<std::string> checks;  // empty: all trajectory checks
    bool zero_lambda_speed = false;
};

DiagnosticsReport run_diagnostics(const EnergyFunctional& e, const JkoTrajectory& traj,
                                  const DiagnosticsOptions& opt = {});

/// Worker count from WB2FLOW_THREADS, else the hardware concurrency.
int thread_budget();

}  // namespace wb2flow
