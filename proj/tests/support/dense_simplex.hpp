#pragma once

// Dense two-phase simplex with Bland's rule, for small LPs in equality form:
//   minimize c.x  subject to  A x = b, x >= 0.
// Slow and simple on purpose; used only as a reference for the flow solver.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace testsupport {

struct LpResult {
    double value = 0.0;
    std::vector<double> x;
};

class DenseSimplex {
public:
    DenseSimplex(std::vector<std::vector<double>> A, std::vector<double> b, std::vector<double> c)
        : m_(static_cast<int>(A.size())), n_(static_cast<int>(c.size())), A_(std::move(A)), b_(std::move(b)),
          c_(std::move(c))
    {
    }

    LpResult solve(double eps = 1e-12)
    {
        // tableau: m rows of [A | I | b], artificials make the start feasible
        const int cols = n_ + m_ + 1;
        T_.assign(m_ + 1, std::vector<double>(cols, 0.0));
        basis_.assign(m_, 0);
        for (int i = 0; i < m_; ++i) {
            const double sign = b_[i] < 0.0 ? -1.0 : 1.0;
            for (int j = 0; j < n_; ++j) T_[i][j] = sign * A_[i][j];
            T_[i][n_ + i] = 1.0;
            T_[i][cols - 1] = sign * b_[i];
            basis_[i] = n_ + i;
        }
        // phase 1: minimize the sum of artificials
        std::vector<double> cost1(n_ + m_, 0.0);
        for (int i = 0; i < m_; ++i) cost1[n_ + i] = 1.0;
        set_objective(cost1);
        run(n_ + m_, eps);
        if (-T_[m_][cols - 1] > 1e-9) throw std::runtime_error("dense_simplex: infeasible");
        // drive artificials out of the basis where possible
        for (int i = 0; i < m_; ++i) {
            if (basis_[i] < n_) continue;
            for (int j = 0; j < n_; ++j)
                if (std::abs(T_[i][j]) > eps) {
                    pivot(i, j);
                    break;
                }
        }
        // phase 2 over the original columns only
        std::vector<double> cost2(n_ + m_, 0.0);
        for (int j = 0; j < n_; ++j) cost2[j] = c_[j];
        set_objective(cost2);
        run(n_, eps);
        LpResult r;
        r.x.assign(n_, 0.0);
        for (int i = 0; i < m_; ++i)
            if (basis_[i] < n_) r.x[basis_[i]] = T_[i][cols - 1];
        for (int j = 0; j < n_; ++j) r.value += c_[j] * r.x[j];
        return r;
    }

private:
    void set_objective(const std::vector<double>& cost)
    {
        const int cols = n_ + m_ + 1;
        auto& z = T_[m_];
        std::fill(z.begin(), z.end(), 0.0);
        for (int j = 0; j < n_ + m_; ++j) z[j] = cost[j];
        // reduced costs: subtract basic rows
        for (int i = 0; i < m_; ++i) {
            const double cb = cost[basis_[i]];
            if (cb == 0.0) continue;
            for (int j = 0; j < cols; ++j) z[j] -= cb * T_[i][j];
        }
    }

    void pivot(int r, int c)
    {
        const int cols = n_ + m_ + 1;
        const double p = T_[r][c];
        for (int j = 0; j < cols; ++j) T_[r][j] /= p;
        for (int i = 0; i <= m_; ++i) {
            if (i == r) continue;
            const double f = T_[i][c];
            if (f == 0.0) continue;
            for (int j = 0; j < cols; ++j) T_[i][j] -= f * T_[r][j];
        }
        basis_[r] = c;
    }

    void run(int allowed, double eps)
    {
        const int rhs = n_ + m_;
        for (int guard = 0; guard < 100000; ++guard) {
            int enter = -1;
            for (int j = 0; j < allowed; ++j)
                if (T_[m_][j] < -eps) {
                    enter = j;
                    break;
                }
            if (enter < 0) return;
            int leave = -1;
            double best = std::numeric_limits<double>::infinity();
            for (int i = 0; i < m_; ++i) {
                if (T_[i][enter] <= eps) continue;
                const double ratio = T_[i][rhs] / T_[i][enter];
                if (ratio < best - eps || (std::abs(ratio - best) <= eps && basis_[i] < basis_[leave])) {
                    best = ratio;
                    leave = i;
                }
            }
            if (leave < 0) throw std::runtime_error("dense_simplex: unbounded");
            pivot(leave, enter);
        }
        throw std::runtime_error("dense_simplex: iteration guard");
    }

    int m_, n_;
    std::vector<std::vector<double>> A_;
    std::vector<double> b_, c_;
    std::vector<std::vector<double>> T_;
    std::vector<int> basis_;
};

}  // namespace testsupport
