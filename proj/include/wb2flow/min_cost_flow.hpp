#pragma once

#include <cstdint>
#include <limits>
#include <vector>

namespace wb2flow {

/// Successive shortest paths with Dijkstra on reduced costs.
///
/// Costs are integers so that optimality is decided exactly; flows and
/// supplies are real. Arcs with negative cost are saturated up front and
/// must have finite capacity.
class MinCostFlow {
public:
    static constexpr double kUnbounded = std::numeric_limits<double>::infinity();

    explicit MinCostFlow(int num_nodes = 0);

    int add_node();
    int add_arc(int from, int to, double capacity, std::int64_t cost);
    void add_supply(int node, double amount);

    /// Throws std::runtime_error if supplies cannot be routed.
    void solve();

    int num_nodes() const { return static_cast<int>(supply_.size()); }
    double flow(int arc) const { return arcs_[2 * arc].flow; }
    /// Node potentials: every residual arc has cost + p[from] - p[to] >= 0.
    const std::vector<std::int64_t>& potentials() const { return pot_; }
    long augmentations() const { return augmentations_; }

private:
    struct Arc {
        int to;
        double cap;
        double flow;
        std::int64_t cost;
    };

    double residual(int e) const { return arcs_[e].cap - arcs_[e].flow; }
    void push(int e, double amount);

    std::vector<Arc> arcs_;  // arc 2k is forward, 2k+1 its reverse
    std::vector<std::vector<int>> out_;
    std::vector<double> supply_;
    std::vector<std::int64_t> pot_;
    long augmentations_ = 0;
};

}  // namespace wb2flow
