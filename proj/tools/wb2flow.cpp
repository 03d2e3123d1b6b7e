// Command-line front end: run, wb2, oracle, diagnose, version.

#include "wb2flow/config.hpp"
#include "wb2flow/diagnostics.hpp"
#include "wb2flow/interval_transport.hpp"
#include "wb2flow/io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace wb2flow;

namespace {

constexpr const char* kVersion = "0.1.0";

// 0 ok, 1 check failure, 2 bad input, 3 numerical failure
enum Exit { kOk = 0, kChecksFailed = 1, kBadInput = 2, kSolverFailed = 3 };

void print(const std::string& key, double v)
{
    std::printf("%-20s %s\n", (key + ":").c_str(), format_double(v).c_str());
}

int cmd_run(const std::string& config_path, const std::string& output, bool quiet)
{
    const RunConfig cfg = load_config(config_path);
    const std::string dir = output.empty() ? cfg.output_dir : output;
    const EnergyFunctional e = cfg.make_energy();
    const GridPtr g = cfg.make_grid();
    const DiscreteMeasure mu0 = cfg.make_initial(g);
    const JkoTrajectory traj = run_scheme(e, mu0, cfg.jko, [&](int k, const StepCertificate& c) {
        if (!quiet)
            std::fprintf(stderr, "step %d  objective %s  gap %s  iters %d%s\n", k, format_double(c.objective).c_str(),
                         format_double(c.gap).c_str(), c.iterations, c.converged ? "" : "  (not converged)");
    });
    const Manifest m = write_trajectory(dir, cfg, e, traj);
    std::printf("wrote %zu densities to %s\n", m.files.size(), dir.c_str());
    std::printf("%-20s %s\n", "config_hash:", m.config_hash.c_str());
    print("tau", traj.tau);
    print("inner_tol", traj.inner_tol);
    print("energy_start", traj.step_energies.front());
    print("energy_end", traj.step_energies.back());
    int unconverged = 0;
    for (const StepCertificate& c : traj.certificates) unconverged += c.converged ? 0 : 1;
    std::printf("%-20s %d/%d\n", "converged:", traj.n_steps() - unconverged, traj.n_steps());
    if (unconverged > 0) {
        std::fprintf(stderr, "error: %d steps did not reach inner_tol\n", unconverged);
        return kSolverFailed;
    }
    return kOk;
}

int cmd_wb2(const std::string& a, const std::string& b, const std::string& plan_path, double entropic,
            const std::string& model_name)
{
    DiscreteMeasure mu, nu;
    try {
        mu = read_density_csv(a);
        nu = read_density_csv(b, mu.grid);
    } catch (const std::runtime_error& err) {
        throw std::invalid_argument(err.what());
    }
    const TransportModel model = parse_model(model_name);
    if (model == TransportModel::PiecewiseConstant) {
        if (!plan_path.empty() || entropic > 0.0)
            throw std::invalid_argument("--plan and --entropic need the cell_centers model");
        const LineMeasure P = LineMeasure::from_measure(mu), Q = LineMeasure::from_measure(nu);
        const double c = optimal_shift(P, Q);
        const double cost = shift_cost(P, Q, c);
        const ReservoirExchange ex = reservoir_exchange(P, Q, c);
        print("wb2_squared", cost);
        print("wb2", std::sqrt(cost));
        print("mass_to_boundary", ex.to_boundary);
        print("mass_from_boundary", ex.from_boundary);
        print("mass_shift", c);
        return kOk;
    }
    const TransportProblem p = TransportProblem::from_measures(mu, nu);
    const ExactSolution sol = solve_exact(p);
    print("wb2_squared", sol.cost);
    print("wb2", std::sqrt(sol.cost));
    print("mass_to_boundary", sol.plan.to_reservoir.sum());
    print("mass_from_boundary", sol.plan.from_reservoir.sum());
    print("interior_flows", static_cast<double>(sol.plan.interior.size()));
    print("phi_min", sol.duals.phi_source.minCoeff());
    print("phi_max", sol.duals.phi_source.maxCoeff());
    print("psi_min", sol.duals.psi_target.minCoeff());
    print("psi_max", sol.duals.psi_target.maxCoeff());
    const TransportPlan* plan = &sol.plan;
    EntropicSolution ent;
    if (entropic > 0.0) {
        ent = solve_entropic(p, entropic, 100000, 1e-10);
        print("entropic_cost", ent.cost);
        print("entropic_violation", ent.marginal_violation);
        print("entropic_iterations", ent.iterations);
        plan = &ent.plan;
    }
    if (!plan_path.empty()) write_file_atomic(plan_path, plan_csv(*plan));
    return kOk;
}

int cmd_oracle(const std::string& config_path, const std::string& output)
{
    const RunConfig cfg = load_config(config_path);
    const std::string dir = output.empty() ? cfg.output_dir : output;
    const EnergyFunctional e = cfg.make_energy();
    const GridPtr g = cfg.make_grid(cfg.oracle.n);
    const DiscreteMeasure rho0 = cfg.make_initial(g);
    const OracleRun run = oracle_solve(cfg.make_oracle(g), rho0);
    const Manifest m = write_oracle_run(dir, cfg, e, run);
    std::printf("wrote %zu densities to %s\n", m.files.size(), dir.c_str());
    std::printf("%-20s %s\n", "config_hash:", m.config_hash.c_str());
    print("steps", static_cast<double>(run.steps));
    print("clipped_mass", run.clipped_mass);
    for (size_t k = 0; k < run.times.size(); ++k)
        std::printf("t=%s  mass=%s  energy=%s\n", format_double(run.times[k]).c_str(),
                    format_double(run.solutions[k].total_mass()).c_str(), format_double(m.energies[k]).c_str());
    return kOk;
}

int cmd_diagnose(const std::string& manifest_path, const std::string& output, bool zero_lambda, double C_d)
{
    const Manifest m = read_manifest(manifest_path);
    const EnergyFunctional e = manifest_energy(m);
    const JkoTrajectory traj = load_trajectory(manifest_path, m, e);
    DiagnosticsOptions opt = m.diagnostics;
    if (zero_lambda) opt.zero_lambda_speed = true;
    if (C_d >= 0.0) opt.C_d = C_d;
    const DiagnosticsReport rep = run_diagnostics(e, traj, opt);
    fs::path dir = output.empty() ? fs::path(manifest_path).parent_path() : fs::path(output);
    if (dir.empty()) dir = ".";
    write_file_atomic((dir / "report.json").string(), report_json(rep));
    write_file_atomic((dir / "report.csv").string(), report_csv(rep));
    for (const CheckRecord& r : rep.records) {
        const char* status = r.skipped ? "SKIP" : (r.pass ? "PASS" : "FAIL");
        std::printf("%-4s %-28s lhs=%s rhs=%s slack_used=%s%s%s\n", status, r.name.c_str(),
                    format_double(r.lhs).c_str(), format_double(r.rhs).c_str(), format_double(r.slack_used).c_str(),
                    r.detail.empty() ? "" : "  ", r.detail.c_str());
    }
    std::printf("report written to %s\n", (dir / "report.json").string().c_str());
    return rep.all_pass() ? kOk : kChecksFailed;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Transport with a boundary reservoir, minimizing movements and diagnostics"};
    app.require_subcommand(1);

    std::string config, output, a, b, plan, model = "cell_centers", manifest;
    bool quiet = false, zero_lambda = false;
    double entropic = 0.0, C_d = -1.0;

    CLI::App* run = app.add_subcommand("run", "Run the minimizing-movement scheme from a config");
    run->add_option("config", config, "Config file")->required();
    run->add_option("-o,--output", output, "Output directory (overrides output_dir)");
    run->add_flag("-q,--quiet", quiet, "No per-step progress");

    CLI::App* wb2 = app.add_subcommand("wb2", "Distance between two density CSVs");
    wb2->add_option("a", a, "First density CSV")->required();
    wb2->add_option("b", b, "Second density CSV")->required();
    wb2->add_option("--plan", plan, "Write the optimal plan as CSV");
    wb2->add_option("--entropic", entropic, "Also solve the entropic problem with this epsilon");
    wb2->add_option("--model", model, "cell_centers or piecewise_constant");

    CLI::App* oracle = app.add_subcommand("oracle", "Run the finite-difference reference solver");
    oracle->add_option("config", config, "Config file")->required();
    oracle->add_option("-o,--output", output, "Output directory (overrides output_dir)");

    CLI::App* diagnose = app.add_subcommand("diagnose", "Check a stored trajectory");
    diagnose->add_option("manifest", manifest, "manifest.json of a run")->required();
    diagnose->add_option("-o,--output", output, "Report directory (default: next to the manifest)");
    diagnose->add_flag("--zero-lambda-speed", zero_lambda, "Add the lambda = 0 speed check");
    diagnose->add_option("--C_d", C_d, "Discretization allowance constant");

    app.add_subcommand("version", "Print the version");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? kOk : kBadInput;
    }

    try {
        if (*run) return cmd_run(config, output, quiet);
        if (*wb2) return cmd_wb2(a, b, plan, entropic, model);
        if (*oracle) return cmd_oracle(config, output);
        if (*diagnose) return cmd_diagnose(manifest, output, zero_lambda, C_d);
        std::printf("wb2flow %s\n", kVersion);
        return kOk;
    } catch (const ConfigError& err) {
        std::fprintf(stderr, "config error: %s\n", err.what());
        return kBadInput;
    } catch (const std::invalid_argument& err) {
        std::fprintf(stderr, "invalid input: %s\n", err.what());
        return kBadInput;
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return kSolverFailed;
    }
}
