#include "wb2flow/min_cost_flow.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <stdexcept>

namespace wb2flow {

MinCostFlow::MinCostFlow(int num_nodes) : out_(num_nodes), supply_(num_nodes, 0.0) {}

int MinCostFlow::add_node()
{
    out_.emplace_back();
    supply_.push_back(0.0);
    return num_nodes() - 1;
}

int MinCostFlow::add_arc(int from, int to, double capacity, std::int64_t cost)
{
    if (capacity < 0.0) throw std::invalid_argument("min_cost_flow: negative capacity");
    if (cost < 0 && std::isinf(capacity))
        throw std::invalid_argument("min_cost_flow: negative-cost arc needs finite capacity");
    const int id = static_cast<int>(arcs_.size()) / 2;
    arcs_.push_back({to, capacity, 0.0, cost});
    arcs_.push_back({from, 0.0, 0.0, -cost});
    out_[from].push_back(2 * id);
    out_[to].push_back(2 * id + 1);
    return id;
}

void MinCostFlow::add_supply(int node, double amount)
{
    supply_[node] += amount;
}

void MinCostFlow::push(int e, double amount)
{
    arcs_[e].flow += amount;
    arcs_[e ^ 1].flow -= amount;
}

void MinCostFlow::solve()
{
    const int n = num_nodes();
    std::vector<double> excess = supply_;
    double scale = 0.0;
    for (double s : supply_) {
        if (!std::isfinite(s)) throw std::invalid_argument("min_cost_flow: non-finite supply");
        scale += std::abs(s);
    }

    for (size_t e = 0; e < arcs_.size(); e += 2) {
        if (arcs_[e].cost < 0 && arcs_[e].cap > 0.0) {
            const double c = arcs_[e].cap;
            push(static_cast<int>(e), c);
            excess[arcs_[e + 1].to] -= c;
            excess[arcs_[e].to] += c;
            scale += c;
        }
    }
    const double tol = 1e-14 * std::max(scale, 1.0);

    pot_.assign(n, 0);
    constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;
    std::vector<std::int64_t> dist(n);
    std::vector<int> via(n);
    using Item = std::pair<std::int64_t, int>;

    for (;;) {
        int s = -1;
        for (int v = 0; v < n; ++v)
            if (excess[v] > tol) {
                s = v;
                break;
            }
        if (s < 0) break;

        std::fill(dist.begin(), dist.end(), kInf);
        std::fill(via.begin(), via.end(), -1);
        std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
        dist[s] = 0;
        pq.push({0, s});
        int t = -1;
        while (!pq.empty()) {
            auto [d, u] = pq.top();
            pq.pop();
            if (d != dist[u]) continue;
            if (excess[u] < -tol) {
                t = u;
                break;
            }
            for (int e : out_[u]) {
                if (residual(e) <= tol) continue;
                const int v = arcs_[e].to;
                const std::int64_t nd = d + arcs_[e].cost + pot_[u] - pot_[v];
                if (nd < dist[v]) {
                    dist[v] = nd;
                    via[v] = e;
                    pq.push({nd, v});
                }
            }
        }
        if (t < 0) {
            // leftover rounding imbalance with no deficit left to absorb it
            double left = 0.0;
            for (double x : excess) left += std::max(x, 0.0);
            if (left <= 1e-11 * std::max(scale, 1.0)) break;
            throw std::runtime_error("min_cost_flow: supplies cannot be routed");
        }

        const std::int64_t dt = dist[t];
        for (int v = 0; v < n; ++v) pot_[v] += std::min(dist[v], dt);

        double amount = std::min(excess[s], -excess[t]);
        for (int v = t; v != s; v = arcs_[via[v] ^ 1].to) amount = std::min(amount, residual(via[v]));
        for (int v = t; v != s; v = arcs_[via[v] ^ 1].to) push(via[v], amount);
        excess[s] -= amount;
        excess[t] += amount;
        ++augmentations_;
    }
}

}  // namespace wb2flow
