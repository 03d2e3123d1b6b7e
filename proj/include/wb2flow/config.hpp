#pragma once

#include "wb2flow/diagnostics.hpp"
#include "wb2flow/jko.hpp"
#include "wb2flow/oracle.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace wb2flow {

/// Invalid configuration; `field` is the dotted path of the offending entry.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& message)
        : std::runtime_error(field.empty() ? message : field + ": " + message), field_(std::move(field))
    {
    }
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

struct GridSection {
    int dim = 1;
    int n = 32;
    std::vector<double> lo;  // empty: unit box
    std::vector<double> hi;
};

struct EnergySection {
    EnergyVariant variant = EnergyVariant::Power;
    double alpha = 2.0;
    double lambda = 1.0;
    std::string potential;  // empty: no potential
};

struct InitialSection {
    std::string expression;
    std::string csv;  // resolved against the config directory
};

struct OracleSection {
    double t_end = 0.0;  // <= 0: tau * n_steps
    double cfl_safety = 0.5;
    std::vector<double> output_times;  // empty: 0 and t_end
    int n = 0;                         // <= 0: grid.n
};

struct RunConfig {
    GridSection grid;
    EnergySection energy;
    InitialSection initial;
    JkoConfig jko;
    OracleSection oracle;
    DiagnosticsOptions diagnostics;
    std::string output_dir = "out";
    std::string base_dir = ".";

    GridPtr make_grid(int n_override = 0) const;
    EnergyFunctional make_energy() const;
    DiscreteMeasure make_initial(const GridPtr& grid) const;
    OracleConfig make_oracle(const GridPtr& grid) const;

    /// Hex FNV-1a digest of the normalized config, without output_dir.
    std::string hash() const;
    /// Normalized config as JSON text with every default filled in.
    std::string canonical() const;
};

/// Parses JSON text (comments allowed). Throws ConfigError.
RunConfig parse_config(const std::string& text, const std::string& base_dir = ".");
RunConfig load_config(const std::string& path);

std::string fnv1a_hex(const std::string& bytes);

/// Everything needed to rebuild a stored trajectory.
struct Manifest {
    std::string source;  // "jko" or "oracle"
    std::string config_hash;
    GridSection grid;
    EnergySection energy;
    double tau = 0.0;
    double inner_tol = 0.0;
    std::string solver;
    std::string model;
    int max_iters = 0;
    double entropic_epsilon = 0.0;
    bool entropic_polish = true;
    double step_a = 0.0;
    double step_b = 0.0;
    std::vector<double> times;
    std::vector<double> energies;
    std::vector<double> step_costs;
    std::vector<StepCertificate> certificates;
    std::vector<std::string> files;  // relative to the manifest directory
    DiagnosticsOptions diagnostics;
    double clipped_mass = 0.0;
};

std::string manifest_json(const Manifest& m);
Manifest read_manifest(const std::string& path);

/// Writes one density CSV per step and manifest.json into `dir`.
Manifest write_trajectory(const std::string& dir, const RunConfig& cfg, const EnergyFunctional& e,
                          const JkoTrajectory& traj);
Manifest write_oracle_run(const std::string& dir, const RunConfig& cfg, const EnergyFunctional& e,
                          const OracleRun& run);

/// Loads the densities listed in a jko manifest and recomputes energies and step costs.
JkoTrajectory load_trajectory(const std::string& manifest_path, const Manifest& m, const EnergyFunctional& e);
EnergyFunctional manifest_energy(const Manifest& m);

}  // namespace wb2flow
