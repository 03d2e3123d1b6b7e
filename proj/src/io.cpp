#include "wb2flow/io.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unistd.h>

namespace wb2flow {

std::string format_double(double v)
{
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_file_atomic(const std::string& path, const std::string& content)
{
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, target);
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string density_csv(const DiscreteMeasure& mu)
{
    const Grid& g = *mu.grid;
    std::string out = g.dim == 1 ? "index,x,density\n" : "index,x,y,density\n";
    for (int i = 0; i < g.num_cells(); ++i) {
        out += std::to_string(i);
        for (int a = 0; a < g.dim; ++a) out += "," + format_double(g.centers(i, a));
        out += "," + format_double(mu.density[i]) + "\n";
    }
    return out;
}

void write_density_csv(const std::string& path, const DiscreteMeasure& mu)
{
    write_file_atomic(path, density_csv(mu));
}

namespace {

std::vector<std::string> split(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r' && c != ' ') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double to_number(const std::string& s, const std::string& where)
{
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != '\0') throw std::runtime_error(where + ": bad number '" + s + "'");
    return v;
}

double snap(double v)
{
    return std::round(v * 1e12) / 1e12;
}

}  // namespace

DiscreteMeasure read_density_csv(const std::string& path, GridPtr grid)
{
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
    const auto header = split(line);
    int dim;
    if (header == std::vector<std::string>{"index", "x", "density"}) dim = 1;
    else if (header == std::vector<std::string>{"index", "x", "y", "density"}) dim = 2;
    else throw std::runtime_error(path + ": expected header index,x[,y],density");

    std::vector<std::vector<double>> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto f = split(line);
        const std::string where = path + ":" + std::to_string(lineno);
        if (static_cast<int>(f.size()) != dim + 2) throw std::runtime_error(where + ": wrong column count");
        if (static_cast<int>(to_number(f[0], where)) != static_cast<int>(rows.size()))
            throw std::runtime_error(where + ": indices must be consecutive from 0");
        std::vector<double> r;
        for (size_t k = 1; k < f.size(); ++k) r.push_back(to_number(f[k], where));
        rows.push_back(r);
    }
    const int cells = static_cast<int>(rows.size());
    if (!grid) {
        int n = cells;
        if (dim == 2) {
            n = static_cast<int>(std::lround(std::sqrt(cells)));
            if (n * n != cells) throw std::runtime_error(path + ": 2D grid must be square");
        }
        if (n < 2) throw std::runtime_error(path + ": need at least 2 cells per axis");
        Box box{Vector(dim), Vector(dim)};
        for (int a = 0; a < dim; ++a) {
            const int last = dim == 1 ? n - 1 : (a == 0 ? (n - 1) * n : n - 1);
            const double c0 = rows[0][a], c1 = rows[last][a];
            const double h = (c1 - c0) / (n - 1);
            box.lo[a] = snap(c0 - 0.5 * h);
            box.hi[a] = snap(c1 + 0.5 * h);
        }
        grid = build_grid(dim, box, n);
    }
    if (grid->dim != dim || grid->num_cells() != cells) throw std::runtime_error(path + ": grid mismatch");
    Vector rho(cells);
    for (int i = 0; i < cells; ++i) {
        for (int a = 0; a < dim; ++a)
            if (std::abs(rows[i][a] - grid->centers(i, a)) > 1e-9)
                throw std::runtime_error(path + ": cell " + std::to_string(i) + " centre does not match the grid");
        rho[i] = rows[i][dim];
    }
    return DiscreteMeasure(grid, rho);
}

std::string plan_csv(const TransportPlan& plan)
{
    std::string out = "src_index,dst_index,mass\n";
    for (const Flow& f : plan.interior)
        out += std::to_string(f.src) + "," + std::to_string(f.dst) + "," + format_double(f.mass) + "\n";
    for (int i = 0; i < plan.to_reservoir.size(); ++i)
        if (plan.to_reservoir[i] > 0.0) out += std::to_string(i) + ",-1," + format_double(plan.to_reservoir[i]) + "\n";
    for (int j = 0; j < plan.from_reservoir.size(); ++j)
        if (plan.from_reservoir[j] > 0.0)
            out += "-1," + std::to_string(j) + "," + format_double(plan.from_reservoir[j]) + "\n";
    return out;
}

namespace {

nlohmann::json number(double v)
{
    if (std::isfinite(v)) return v;
    return format_double(v);
}

}  // namespace

std::string report_json(const DiagnosticsReport& rep)
{
    nlohmann::json j;
    j["metadata"] = {{"tau", rep.tau}, {"h", rep.h},     {"alpha", rep.alpha},
                     {"lambda", rep.lambda}, {"E0", rep.E0}, {"variant", rep.variant}};
    nlohmann::json checks = nlohmann::json::array();
    for (const CheckRecord& r : rep.records) {
        checks.push_back({{"name", r.name},
                          {"anchor", r.anchor},
                          {"lhs", number(r.lhs)},
                          {"rhs", number(r.rhs)},
                          {"slack", number(r.slack)},
                          {"slack_used", number(r.slack_used)},
                          {"pass", r.pass},
                          {"skipped", r.skipped},
                          {"detail", r.detail}});
    }
    j["checks"] = checks;
    j["all_pass"] = rep.all_pass();
    return j.dump(2) + "\n";
}

std::string report_csv(const DiagnosticsReport& rep)
{
    auto quote = [](const std::string& s) {
        std::string out = "\"";
        for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
        return out + "\"";
    };
    std::string out = "name,anchor,lhs,rhs,slack,slack_used,pass,skipped,detail\n";
    for (const CheckRecord& r : rep.records) {
        out += r.name + "," + quote(r.anchor) + "," + format_double(r.lhs) + "," + format_double(r.rhs) + "," +
               format_double(r.slack) + "," + format_double(r.slack_used) + "," + (r.pass ? "1" : "0") + "," +
               (r.skipped ? "1" : "0") + "," + quote(r.detail) + "\n";
    }
    return out;
}

}  // namespace wb2flow
