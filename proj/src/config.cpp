#include "wb2flow/config.hpp"

#include "wb2flow/expression.hpp"
#include "wb2flow/io.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

namespace wb2flow {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Walks one JSON object, remembering which keys were consumed.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json* get(const std::string& key)
    {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() || it->is_null() ? nullptr : &*it;
    }

    void number(const std::string& key, double& out)
    {
        if (const json* v = get(key)) {
            if (!v->is_number()) throw ConfigError(field(key), "expected a number");
            out = v->get<double>();
        }
    }

    void integer(const std::string& key, int& out)
    {
        if (const json* v = get(key)) {
            if (!v->is_number_integer()) throw ConfigError(field(key), "expected an integer");
            out = v->get<int>();
        }
    }

    void string(const std::string& key, std::string& out)
    {
        if (const json* v = get(key)) {
            if (!v->is_string()) throw ConfigError(field(key), "expected a string");
            out = v->get<std::string>();
        }
    }

    void boolean(const std::string& key, bool& out)
    {
        if (const json* v = get(key)) {
            if (!v->is_boolean()) throw ConfigError(field(key), "expected true or false");
            out = v->get<bool>();
        }
    }

    void numbers(const std::string& key, std::vector<double>& out)
    {
        if (const json* v = get(key)) {
            if (!v->is_array()) throw ConfigError(field(key), "expected an array of numbers");
            out.clear();
            for (const json& x : *v) {
                if (!x.is_number()) throw ConfigError(field(key), "expected an array of numbers");
                out.push_back(x.get<double>());
            }
        }
    }

    void strings(const std::string& key, std::vector<std::string>& out)
    {
        if (const json* v = get(key)) {
            if (!v->is_array()) throw ConfigError(field(key), "expected an array of strings");
            out.clear();
            for (const json& x : *v) {
                if (!x.is_string()) throw ConfigError(field(key), "expected an array of strings");
                out.push_back(x.get<std::string>());
            }
        }
    }

    /// Throws on keys nobody asked for; catches typos.
    void finish() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(field(it.key()), "unknown field");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

const std::vector<std::string> kCheckNames = {
    "energy_monotone", "step_sum",   "refined_step_sum",         "holder",
    "boundary_band",   "envelopes",  "edi",                      "metric_derivative_bound",
    "metric_derivative_converse",    "zero_lambda_speed",        "mass_bounds",
};

std::string variant_name(EnergyVariant v)
{
    return v == EnergyVariant::Power ? "power" : "entropy";
}

EnergyVariant parse_variant(const std::string& s, const std::string& field)
{
    if (s == "power") return EnergyVariant::Power;
    if (s == "entropy") return EnergyVariant::Entropy;
    throw ConfigError(field, "expected 'power' or 'entropy', got '" + s + "'");
}

void read_grid(Section& s, GridSection& g)
{
    s.integer("dim", g.dim);
    s.integer("n", g.n);
    if (const json* ext = s.get("extent")) {
        Section e(*ext, s.field("extent"));
        e.numbers("lo", g.lo);
        e.numbers("hi", g.hi);
        e.finish();
    }
    if (g.dim != 1 && g.dim != 2) throw ConfigError(s.field("dim"), "must be 1 or 2");
    if (g.n < 2) throw ConfigError(s.field("n"), "must be at least 2");
    if (g.lo.empty()) g.lo.assign(g.dim, 0.0);
    if (g.hi.empty()) g.hi.assign(g.dim, 1.0);
    if (static_cast<int>(g.lo.size()) != g.dim) throw ConfigError(s.field("extent.lo"), "needs dim entries");
    if (static_cast<int>(g.hi.size()) != g.dim) throw ConfigError(s.field("extent.hi"), "needs dim entries");
    for (int a = 0; a < g.dim; ++a)
        if (!(g.hi[a] > g.lo[a])) throw ConfigError(s.field("extent"), "hi must exceed lo on every axis");
}

void read_energy(Section& s, EnergySection& e)
{
    std::string variant = variant_name(e.variant);
    s.string("variant", variant);
    e.variant = parse_variant(variant, s.field("variant"));
    s.number("alpha", e.alpha);
    s.number("lambda", e.lambda);
    s.string("potential", e.potential);
}

json grid_json(const GridSection& g)
{
    return {{"dim", g.dim}, {"n", g.n}, {"extent", {{"lo", g.lo}, {"hi", g.hi}}}};
}

json energy_json(const EnergySection& e)
{
    json j = {{"variant", variant_name(e.variant)}, {"lambda", e.lambda}, {"potential", e.potential}};
    if (e.variant == EnergyVariant::Power) j["alpha"] = e.alpha;
    return j;
}

GridSection grid_from_json(const json& j)
{
    Section s(j, "grid");
    GridSection g;
    read_grid(s, g);
    return g;
}

EnergySection energy_from_json(const json& j)
{
    Section s(j, "energy");
    EnergySection e;
    read_energy(s, e);
    return e;
}

GridPtr grid_of(const GridSection& gs, int n)
{
    Box box{Vector(gs.dim), Vector(gs.dim)};
    for (int a = 0; a < gs.dim; ++a) {
        box.lo[a] = gs.lo[a];
        box.hi[a] = gs.hi[a];
    }
    return build_grid(gs.dim, box, n);
}

EnergyFunctional energy_of(const EnergySection& es, int dim)
{
    EnergyFunctional e = es.variant == EnergyVariant::Power ? EnergyFunctional::power(es.alpha, es.lambda)
                                                            : EnergyFunctional::entropy(es.lambda);
    if (!es.potential.empty()) {
        const Expression v = Expression::parse(es.potential, dim);
        e.potential = Potential{[v](const Point& p) { return v(p); },
                                [v](const Point& p) { return v.gradient(p); }, es.potential};
    }
    return e;
}

}  // namespace

std::string fnv1a_hex(const std::string& bytes)
{
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

RunConfig parse_config(const std::string& text, const std::string& base_dir)
{
    json root;
    try {
        root = json::parse(text, nullptr, true, true);
    } catch (const json::parse_error& err) {
        const size_t byte = std::min<size_t>(err.byte, text.size());
        const long line = 1 + std::count(text.begin(), text.begin() + static_cast<long>(byte > 0 ? byte - 1 : 0), '\n');
        throw ConfigError("", "syntax error on line " + std::to_string(line) + ": " + err.what());
    }

    RunConfig cfg;
    cfg.base_dir = base_dir;
    Section top(root, "");

    const json* g = top.get("grid");
    if (!g) throw ConfigError("grid", "missing section");
    {
        Section s(*g, "grid");
        read_grid(s, cfg.grid);
        s.finish();
    }

    const json* en = top.get("energy");
    if (!en) throw ConfigError("energy", "missing section");
    {
        Section s(*en, "energy");
        read_energy(s, cfg.energy);
        s.finish();
    }

    const json* init = top.get("initial");
    if (!init) throw ConfigError("initial", "missing section");
    {
        Section s(*init, "initial");
        s.string("expression", cfg.initial.expression);
        s.string("csv", cfg.initial.csv);
        s.finish();
        if (cfg.initial.expression.empty() == cfg.initial.csv.empty())
            throw ConfigError("initial", "give exactly one of 'expression' or 'csv'");
    }

    if (const json* jk = top.get("jko")) {
        Section s(*jk, "jko");
        JkoConfig& c = cfg.jko;
        s.number("tau", c.tau);
        s.integer("n_steps", c.n_steps);
        std::string solver = to_string(c.solver);
        s.string("solver", solver);
        try {
            c.solver = parse_solver(solver);
        } catch (const std::exception& ex) {
            throw ConfigError(s.field("solver"), ex.what());
        }
        std::string model;
        s.string("model", model);
        if (!model.empty() && model != "auto") {
            try {
                c.model = parse_model(model);
            } catch (const std::exception& ex) {
                throw ConfigError(s.field("model"), ex.what());
            }
        }
        s.number("inner_tol", c.inner_tol);
        s.integer("max_iters", c.max_iters);
        s.number("entropic_epsilon", c.entropic_epsilon);
        s.boolean("entropic_polish", c.entropic_polish);
        s.number("step_a", c.step_a);
        s.number("step_b", c.step_b);
        s.finish();
        if (!(c.tau > 0.0)) throw ConfigError("jko.tau", "must be positive");
        if (c.n_steps < 1) throw ConfigError("jko.n_steps", "must be at least 1");
        if (c.max_iters < 1) throw ConfigError("jko.max_iters", "must be at least 1");
        if (!(c.step_b > 0.0)) throw ConfigError("jko.step_b", "must be positive");
    }

    if (const json* o = top.get("oracle")) {
        Section s(*o, "oracle");
        s.number("t_end", cfg.oracle.t_end);
        s.number("cfl_safety", cfg.oracle.cfl_safety);
        s.numbers("output_times", cfg.oracle.output_times);
        s.integer("n", cfg.oracle.n);
        s.finish();
        if (!(cfg.oracle.cfl_safety > 0.0 && cfg.oracle.cfl_safety <= 1.0))
            throw ConfigError("oracle.cfl_safety", "must be in (0, 1]");
    }
    if (!(cfg.oracle.t_end > 0.0)) cfg.oracle.t_end = cfg.jko.tau * cfg.jko.n_steps;
    if (cfg.oracle.n <= 0) cfg.oracle.n = cfg.grid.n;
    if (cfg.oracle.output_times.empty()) cfg.oracle.output_times = {0.0, cfg.oracle.t_end};
    for (double t : cfg.oracle.output_times)
        if (!(t >= 0.0 && t <= cfg.oracle.t_end)) throw ConfigError("oracle.output_times", "entries must lie in [0, t_end]");

    if (const json* d = top.get("diagnostics")) {
        Section s(*d, "diagnostics");
        s.strings("checks", cfg.diagnostics.checks);
        s.number("C_d", cfg.diagnostics.C_d);
        s.boolean("zero_lambda_speed", cfg.diagnostics.zero_lambda_speed);
        s.finish();
        for (const std::string& c : cfg.diagnostics.checks)
            if (std::find(kCheckNames.begin(), kCheckNames.end(), c) == kCheckNames.end())
                throw ConfigError("diagnostics.checks", "unknown check '" + c + "'");
        if (!(cfg.diagnostics.C_d >= 0.0)) throw ConfigError("diagnostics.C_d", "must be nonnegative");
    }

    top.string("output_dir", cfg.output_dir);
    top.finish();

    try {
        cfg.make_energy().validate(cfg.make_grid()->extent);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& ex) {
        const std::string what = ex.what();
        throw ConfigError(cfg.energy.potential.empty() ? "energy" : "energy.potential", what);
    }
    if (!cfg.initial.expression.empty()) {
        try {
            Expression::parse(cfg.initial.expression, cfg.grid.dim);
        } catch (const std::exception& ex) {
            throw ConfigError("initial.expression", ex.what());
        }
    }
    cfg.make_initial(cfg.make_grid());
    return cfg;
}

RunConfig load_config(const std::string& path)
{
    std::string text;
    try {
        text = read_file(path);
    } catch (const std::exception& ex) {
        throw ConfigError("", ex.what());
    }
    const fs::path parent = fs::path(path).parent_path();
    return parse_config(text, parent.empty() ? "." : parent.string());
}

GridPtr RunConfig::make_grid(int n_override) const
{
    return grid_of(grid, n_override > 0 ? n_override : grid.n);
}

EnergyFunctional RunConfig::make_energy() const
{
    try {
        return energy_of(energy, grid.dim);
    } catch (const std::invalid_argument& ex) {
        throw ConfigError(energy.potential.empty() ? "energy" : "energy.potential", ex.what());
    }
}

DiscreteMeasure RunConfig::make_initial(const GridPtr& g) const
{
    if (!initial.csv.empty()) {
        const fs::path p = fs::path(base_dir) / initial.csv;
        try {
            return read_density_csv(p.string(), g);
        } catch (const std::exception& ex) {
            throw ConfigError("initial.csv", ex.what());
        }
    }
    const Expression f = Expression::parse(initial.expression, grid.dim);
    Vector rho(g->num_cells());
    for (int i = 0; i < g->num_cells(); ++i) rho[i] = f(g->center(i));
    try {
        return DiscreteMeasure(g, rho);
    } catch (const std::exception& ex) {
        throw ConfigError("initial.expression", ex.what());
    }
}

OracleConfig RunConfig::make_oracle(const GridPtr& g) const
{
    OracleConfig oc;
    oc.grid = g;
    oc.energy = make_energy();
    oc.t_end = oracle.t_end;
    oc.cfl_safety = oracle.cfl_safety;
    oc.output_times = oracle.output_times;
    return oc;
}

std::string RunConfig::canonical() const
{
    json init;
    if (!initial.csv.empty()) {
        // Hash the contents, not the path.
        std::string content;
        try {
            content = read_file((fs::path(base_dir) / initial.csv).string());
        } catch (const std::exception&) {
        }
        init = {{"csv_digest", fnv1a_hex(content)}};
    } else {
        init = {{"expression", initial.expression}};
    }
    const json j = {
        {"grid", grid_json(grid)},
        {"energy", energy_json(energy)},
        {"initial", init},
        {"jko",
         {{"tau", jko.tau},
          {"n_steps", jko.n_steps},
          {"solver", to_string(jko.solver)},
          {"model", jko.model ? to_string(*jko.model) : "auto"},
          {"inner_tol", jko.inner_tol},
          {"max_iters", jko.max_iters},
          {"entropic_epsilon", jko.entropic_epsilon},
          {"entropic_polish", jko.entropic_polish},
          {"step_a", jko.step_a},
          {"step_b", jko.step_b}}},
        {"oracle",
         {{"t_end", oracle.t_end},
          {"cfl_safety", oracle.cfl_safety},
          {"output_times", oracle.output_times},
          {"n", oracle.n}}},
        {"diagnostics",
         {{"checks", diagnostics.checks},
          {"C_d", diagnostics.C_d},
          {"zero_lambda_speed", diagnostics.zero_lambda_speed}}},
    };
    return j.dump();
}

std::string RunConfig::hash() const
{
    return fnv1a_hex(canonical());
}

namespace {

json number(double v)
{
    if (std::isfinite(v)) return v;
    return format_double(v);
}

double to_double(const json& j, const std::string& field)
{
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "inf") return kInfinity;
        if (s == "-inf") return -kInfinity;
        if (s == "nan") return std::nan("");
    }
    throw ConfigError(field, "expected a number");
}

std::vector<double> doubles(const json& j, const std::string& key)
{
    std::vector<double> out;
    if (!j.contains(key)) return out;
    if (!j.at(key).is_array()) throw ConfigError(key, "expected an array");
    for (const json& x : j.at(key)) out.push_back(to_double(x, key));
    return out;
}

}  // namespace

std::string manifest_json(const Manifest& m)
{
    json certs = json::array();
    for (const StepCertificate& c : m.certificates)
        certs.push_back({{"objective", number(c.objective)},
                         {"gap", number(c.gap)},
                         {"step_cost", number(c.step_cost)},
                         {"iterations", c.iterations},
                         {"converged", c.converged}});
    json energies = json::array(), costs = json::array();
    for (double v : m.energies) energies.push_back(number(v));
    for (double v : m.step_costs) costs.push_back(number(v));
    json j = {
        {"format", "wb2flow-manifest"},
        {"version", 1},
        {"source", m.source},
        {"config_hash", m.config_hash},
        {"grid", grid_json(m.grid)},
        {"energy", energy_json(m.energy)},
        {"times", m.times},
        {"energies", energies},
        {"files", m.files},
        {"diagnostics",
         {{"checks", m.diagnostics.checks},
          {"C_d", m.diagnostics.C_d},
          {"zero_lambda_speed", m.diagnostics.zero_lambda_speed}}},
    };
    if (m.source == "jko") {
        j["tau"] = m.tau;
        j["step_costs"] = costs;
        j["settings"] = {{"solver", m.solver},
                         {"model", m.model},
                         {"inner_tol", m.inner_tol},
                         {"max_iters", m.max_iters},
                         {"entropic_epsilon", m.entropic_epsilon},
                         {"entropic_polish", m.entropic_polish},
                         {"step_a", m.step_a},
                         {"step_b", m.step_b}};
        j["certificates"] = certs;
    } else {
        j["clipped_mass"] = m.clipped_mass;
    }
    return j.dump(2) + "\n";
}

Manifest read_manifest(const std::string& path)
{
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& err) {
        throw ConfigError("", path + ": " + err.what());
    } catch (const std::exception& ex) {
        throw ConfigError("", ex.what());
    }
    if (!j.is_object() || j.value("format", "") != "wb2flow-manifest")
        throw ConfigError("format", path + " is not a wb2flow manifest");
    Manifest m;
    try {
        m.source = j.at("source").get<std::string>();
        m.config_hash = j.value("config_hash", "");
        m.grid = grid_from_json(j.at("grid"));
        m.energy = energy_from_json(j.at("energy"));
        m.times = doubles(j, "times");
        m.energies = doubles(j, "energies");
        m.files = j.at("files").get<std::vector<std::string>>();
        if (j.contains("diagnostics")) {
            const json& d = j.at("diagnostics");
            m.diagnostics.checks = d.value("checks", std::vector<std::string>{});
            m.diagnostics.C_d = d.value("C_d", 1.0);
            m.diagnostics.zero_lambda_speed = d.value("zero_lambda_speed", false);
        }
        if (m.source == "jko") {
            m.tau = j.at("tau").get<double>();
            m.step_costs = doubles(j, "step_costs");
            const json& s = j.at("settings");
            m.solver = s.at("solver").get<std::string>();
            m.model = s.at("model").get<std::string>();
            m.inner_tol = s.at("inner_tol").get<double>();
            m.max_iters = s.value("max_iters", 0);
            m.entropic_epsilon = s.value("entropic_epsilon", 0.0);
            m.entropic_polish = s.value("entropic_polish", true);
            m.step_a = s.value("step_a", 0.0);
            m.step_b = s.value("step_b", 0.0);
            for (const json& c : j.value("certificates", json::array())) {
                StepCertificate sc;
                sc.objective = to_double(c.at("objective"), "certificates");
                sc.gap = to_double(c.at("gap"), "certificates");
                sc.step_cost = to_double(c.at("step_cost"), "certificates");
                sc.iterations = c.at("iterations").get<int>();
                sc.converged = c.at("converged").get<bool>();
                m.certificates.push_back(sc);
            }
        } else if (m.source == "oracle") {
            m.clipped_mass = j.value("clipped_mass", 0.0);
        } else {
            throw ConfigError("source", "expected 'jko' or 'oracle'");
        }
    } catch (const json::exception& ex) {
        throw ConfigError("", path + ": " + ex.what());
    }
    if (m.files.size() != m.times.size()) throw ConfigError("files", "one file per time required");
    return m;
}

Manifest write_trajectory(const std::string& dir, const RunConfig& cfg, const EnergyFunctional& e,
                          const JkoTrajectory& traj)
{
    const JkoSettings s = resolve(cfg.jko, e, traj.steps.front());
    Manifest m;
    m.source = "jko";
    m.config_hash = cfg.hash();
    m.grid = cfg.grid;
    m.energy = cfg.energy;
    m.tau = traj.tau;
    m.inner_tol = traj.inner_tol;
    m.solver = to_string(s.solver);
    m.model = to_string(traj.model);
    m.max_iters = s.max_iters;
    m.entropic_epsilon = s.entropic_epsilon;
    m.entropic_polish = s.entropic_polish;
    m.step_a = s.step_a;
    m.step_b = s.step_b;
    m.energies = traj.step_energies;
    m.step_costs = traj.step_costs;
    m.certificates = traj.certificates;
    m.diagnostics = cfg.diagnostics;
    for (size_t k = 0; k < traj.steps.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "step_%05zu.csv", k);
        write_density_csv((fs::path(dir) / name).string(), traj.steps[k]);
        m.files.push_back(name);
        m.times.push_back(static_cast<double>(k) * traj.tau);
    }
    write_file_atomic((fs::path(dir) / "manifest.json").string(), manifest_json(m));
    return m;
}

Manifest write_oracle_run(const std::string& dir, const RunConfig& cfg, const EnergyFunctional& e,
                          const OracleRun& run)
{
    Manifest m;
    m.source = "oracle";
    m.config_hash = cfg.hash();
    m.grid = cfg.grid;
    m.grid.n = cfg.oracle.n;
    m.energy = cfg.energy;
    m.times = run.times;
    m.clipped_mass = run.clipped_mass;
    m.diagnostics = cfg.diagnostics;
    for (size_t k = 0; k < run.solutions.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "oracle_%05zu.csv", k);
        write_density_csv((fs::path(dir) / name).string(), run.solutions[k]);
        m.files.push_back(name);
        m.energies.push_back(evaluate_energy(e, run.solutions[k]));
    }
    write_file_atomic((fs::path(dir) / "manifest.json").string(), manifest_json(m));
    return m;
}

EnergyFunctional manifest_energy(const Manifest& m)
{
    EnergyFunctional e = energy_of(m.energy, m.grid.dim);
    e.validate();
    return e;
}

JkoTrajectory load_trajectory(const std::string& manifest_path, const Manifest& m, const EnergyFunctional& e)
{
    if (m.source != "jko") throw ConfigError("source", "diagnostics need a jko trajectory");
    if (m.files.size() < 2) throw ConfigError("files", "need at least two steps");
    const fs::path dir = fs::path(manifest_path).parent_path();
    const GridPtr g = grid_of(m.grid, m.grid.n);
    JkoTrajectory t;
    t.tau = m.tau;
    t.inner_tol = m.inner_tol;
    t.model = parse_model(m.model);
    for (const std::string& f : m.files) t.steps.push_back(read_density_csv((dir / f).string(), g));
    for (const DiscreteMeasure& mu : t.steps) t.step_energies.push_back(evaluate_energy(e, mu));
    for (size_t k = 0; k + 1 < t.steps.size(); ++k)
        t.step_costs.push_back(wb2_squared(t.steps[k], t.steps[k + 1], t.model));
    t.certificates = m.certificates;
    t.certificates.resize(t.step_costs.size());
    return t;
}

}  // namespace wb2flow
