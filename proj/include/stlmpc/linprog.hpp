// stlmpc/linprog.hpp — dense bounded-variable primal simplex
//
// Solves   maximize  c.x   s.t.  A x <= b,  l <= x <= u
// with +-inf bounds allowed.  Two phases: artificial variables drive the
// initial basis feasible, then the real cost is optimized.  Entering
// variable by largest reduced cost; after a run of degenerate pivots the
// rule switches to Bland's (lowest index), which guarantees termination.
// All ties break on the lowest variable index, so runs are reproducible.
//
// The basis inverse is kept explicitly and updated per pivot; it is
// refactorized from scratch at a fixed cadence to bound drift.  Sizes here
// are at most a few hundred rows, so dense storage is the right trade.

#pragma once

#include "stlmpc/common.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace stlmpc {

struct LpProblem {
    Vec cost;          // maximize cost.dot(x)
    Mat A;             // rows: a.x <= b
    Vec b;
    Vec lower, upper;  // per-variable bounds, +-inf allowed

    int num_vars() const { return static_cast<int>(cost.size()); }
    int num_rows() const { return static_cast<int>(A.rows()); }

    void validate() const {
        if (A.rows() != b.size()) throw DimensionError("LpProblem: A rows vs b mismatch");
        if (A.cols() != cost.size() && A.rows() > 0)
            throw DimensionError("LpProblem: A cols vs cost mismatch");
        if (lower.size() != cost.size() || upper.size() != cost.size())
            throw DimensionError("LpProblem: bounds size mismatch");
        for (int j = 0; j < num_vars(); ++j)
            if (lower(j) > upper(j))
                throw DimensionError("LpProblem: lower > upper for variable " + std::to_string(j));
        if (!cost.allFinite()) throw DimensionError("LpProblem: non-finite cost coefficient");
        if (A.size() > 0 && !A.allFinite()) throw DimensionError("LpProblem: non-finite row entry");
    }
};

struct SolveOptions {
    double feas_tol = 1e-9;
    double cost_tol = 1e-9;
    int max_iterations = 0;  // 0 = choose from problem size
};

struct LpSolution {
    enum class Status { Optimal, Infeasible, Unbounded, Breakdown };

    Status status = Status::Breakdown;
    Vec x;
    double objective = 0.0;
    int iterations = 0;
    Vec row_duals;     // multipliers of the <= rows at the final basis
    std::string note;  // diagnostics for Breakdown
};

inline const char* to_string(LpSolution::Status s) {
    switch (s) {
        case LpSolution::Status::Optimal: return "optimal";
        case LpSolution::Status::Infeasible: return "infeasible";
        case LpSolution::Status::Unbounded: return "unbounded";
        case LpSolution::Status::Breakdown: return "breakdown";
    }
    return "?";
}

namespace detail {

class Simplex {
public:
    Simplex(const LpProblem& p, const SolveOptions& opt) : p_(p), opt_(opt) {
        n_ = p.num_vars();
        m_ = p.num_rows();
        lo_.resize(n_ + m_);
        up_.resize(n_ + m_);
        lo_.head(n_) = p.lower;
        up_.head(n_) = p.upper;
        lo_.tail(m_).setZero();
        up_.tail(m_).setConstant(kInf);
        state_.assign(static_cast<std::size_t>(n_ + m_), VS::AtLower);
        max_iters_ = opt.max_iterations > 0 ? opt.max_iterations : 5000 + 40 * (n_ + 2 * m_);
    }

    LpSolution run() {
        LpSolution sol;
        for (int j = 0; j < n_; ++j) {
            if (std::isfinite(lo_(j))) state_[j] = VS::AtLower;
            else if (std::isfinite(up_(j))) state_[j] = VS::AtUpper;
            else state_[j] = VS::FreeZero;
        }
        basis_.resize(m_);
        for (int i = 0; i < m_; ++i) basis_[i] = n_ + i;  // slacks
        Binv_ = Mat::Identity(m_, m_);
        recompute_basics();

        // Rows whose slack starts negative get an artificial column -e_i.
        std::vector<int> art_rows;
        for (int i = 0; i < m_; ++i)
            if (xB_(i) < -opt_.feas_tol) art_rows.push_back(i);
        n_art_ = static_cast<int>(art_rows.size());
        if (n_art_ > 0) {
            art_row_.assign(static_cast<std::size_t>(n_art_), 0);
            lo_.conservativeResize(n_ + m_ + n_art_);
            up_.conservativeResize(n_ + m_ + n_art_);
            for (int a = 0; a < n_art_; ++a) {
                int j = n_ + m_ + a;
                art_row_[a] = art_rows[static_cast<std::size_t>(a)];
                lo_(j) = 0;
                up_(j) = kInf;
                state_.push_back(VS::AtLower);
                int row = art_rows[static_cast<std::size_t>(a)];
                state_[static_cast<std::size_t>(basis_[row])] = VS::AtLower;  // slack out at 0
                basis_[row] = j;
                state_[static_cast<std::size_t>(j)] = VS::Basic;
            }
            if (!refactor()) return finish_breakdown(sol, "singular artificial basis");

            Vec phase1 = Vec::Zero(total());
            for (int a = 0; a < n_art_; ++a) phase1(n_ + m_ + a) = -1.0;
            Outcome out = iterate(phase1, /*allow_unbounded=*/false);
            if (out != Outcome::Converged) return finish_breakdown(sol, "phase-1 did not converge");
            double infeas = 0;
            for (int a = 0; a < n_art_; ++a) infeas += variable_value(n_ + m_ + a);
            if (infeas > std::max(opt_.feas_tol, 1e-7)) {
                sol.status = LpSolution::Status::Infeasible;
                sol.iterations = iters_;
                return sol;
            }
            for (int a = 0; a < n_art_; ++a) up_(n_ + m_ + a) = 0;  // pin to zero
        }

        Vec phase2 = Vec::Zero(total());
        phase2.head(n_) = p_.cost;
        Outcome out = iterate(phase2, /*allow_unbounded=*/true);
        if (out == Outcome::Unbounded) {
            sol.status = LpSolution::Status::Unbounded;
            sol.iterations = iters_;
            return sol;
        }
        if (out != Outcome::Converged) return finish_breakdown(sol, "iteration limit or singular basis");

        sol.x.resize(n_);
        for (int j = 0; j < n_; ++j) sol.x(j) = variable_value(j);
        sol.objective = p_.cost.dot(sol.x);
        sol.iterations = iters_;
        sol.row_duals = duals(phase2);
        if (!check_solution(sol.x)) return finish_breakdown(sol, "final point failed feasibility check");
        sol.status = LpSolution::Status::Optimal;
        return sol;
    }

private:
    enum class VS : std::uint8_t { Basic, AtLower, AtUpper, FreeZero };
    enum class Outcome { Converged, Unbounded, Failed };

    const LpProblem& p_;
    SolveOptions opt_;
    int n_ = 0, m_ = 0, n_art_ = 0;
    Vec lo_, up_;
    std::vector<VS> state_;
    std::vector<int> basis_;
    std::vector<int> art_row_;
    Vec xB_;
    Mat Binv_;
    int iters_ = 0, max_iters_ = 0, pivots_since_refactor_ = 0;

    static constexpr double kRatioEps = 1e-9;

    int total() const { return n_ + m_ + n_art_; }

    Vec column(int j) const {
        if (j < n_) return p_.A.col(j);
        Vec e = Vec::Zero(m_);
        if (j < n_ + m_) e(j - n_) = 1.0;
        else e(art_row_[static_cast<std::size_t>(j - n_ - m_)]) = -1.0;
        return e;
    }

    double nonbasic_value(int j) const {
        switch (state_[static_cast<std::size_t>(j)]) {
            case VS::AtLower: return lo_(j);
            case VS::AtUpper: return up_(j);
            case VS::FreeZero: return 0.0;
            case VS::Basic: break;
        }
        throw Error("simplex: nonbasic_value on basic variable");
    }

    double variable_value(int j) const {
        if (state_[static_cast<std::size_t>(j)] == VS::Basic) {
            for (int i = 0; i < m_; ++i)
                if (basis_[i] == j) return xB_(i);
            throw Error("simplex: basic variable not in basis");
        }
        return nonbasic_value(j);
    }

    void recompute_basics() {
        Vec r = p_.b;
        for (int j = 0; j < total(); ++j) {
            if (state_[static_cast<std::size_t>(j)] == VS::Basic) continue;
            double v = nonbasic_value(j);
            if (v != 0.0) r -= column(j) * v;
        }
        xB_ = Binv_ * r;
    }

    bool refactor() {
        Mat B(m_, m_);
        for (int i = 0; i < m_; ++i) B.col(i) = column(basis_[i]);
        Eigen::PartialPivLU<Mat> lu(B);
        if (m_ > 0) {
            double dmin = kInf, dmax = 0;
            for (int i = 0; i < m_; ++i) {
                double d = std::abs(lu.matrixLU()(i, i));
                dmin = std::min(dmin, d);
                dmax = std::max(dmax, d);
            }
            if (!(dmin > 1e-12 * std::max(1.0, dmax))) return false;  // singular basis
        }
        Binv_ = lu.inverse();
        recompute_basics();
        pivots_since_refactor_ = 0;
        return true;
    }

    Vec duals(const Vec& cost) const {
        Vec cB(m_);
        for (int i = 0; i < m_; ++i) cB(i) = cost(basis_[i]);
        return Binv_.transpose() * cB;
    }

    Outcome iterate(const Vec& cost, bool allow_unbounded) {
        int degen_streak = 0;
        bool bland = false;
        while (true) {
            if (++iters_ > max_iters_) return Outcome::Failed;

            Vec y = duals(cost);
            Vec d_struct;
            if (n_ > 0)
                d_struct = cost.head(n_) - (m_ > 0 ? Vec(p_.A.transpose() * y) : Vec(Vec::Zero(n_)));

            auto reduced = [&](int j) -> double {
                if (j < n_) return d_struct(j);
                if (j < n_ + m_) return cost(j) - y(j - n_);
                return cost(j) + y(art_row_[static_cast<std::size_t>(j - n_ - m_)]);
            };

            int enter = -1, dir = 0;
            double best = 0;
            for (int j = 0; j < total(); ++j) {
                VS st = state_[static_cast<std::size_t>(j)];
                if (st == VS::Basic) continue;
                if (up_(j) - lo_(j) <= 0) continue;  // pinned
                double d = reduced(j);
                int sigma = 0;
                if (st == VS::AtLower && d > opt_.cost_tol) sigma = 1;
                else if (st == VS::AtUpper && d < -opt_.cost_tol) sigma = -1;
                else if (st == VS::FreeZero && std::abs(d) > opt_.cost_tol) sigma = d > 0 ? 1 : -1;
                if (sigma == 0) continue;
                if (bland) { enter = j; dir = sigma; break; }
                if (std::abs(d) > best + 1e-15) {
                    best = std::abs(d);
                    enter = j;
                    dir = sigma;
                }
            }
            if (enter < 0) return Outcome::Converged;  // optimal for this cost

            Vec ycol = Binv_ * column(enter);

            // Ratio test, two passes: first the tightest step, then the row
            // with the largest pivot among the (near-)tied blockers.  Tiny
            // pivots wreck the updated inverse, so stability beats strict
            // minimality here; Bland mode overrides with the lowest index.
            auto row_limit = [&](int i, double& t_i, bool& hits_upper) {
                double delta = dir * ycol(i);
                int bj = basis_[i];
                t_i = kInf;
                hits_upper = false;
                if (delta > kRatioEps) {
                    if (std::isfinite(lo_(bj))) t_i = (xB_(i) - lo_(bj)) / delta;
                } else if (delta < -kRatioEps) {
                    if (std::isfinite(up_(bj))) {
                        t_i = (up_(bj) - xB_(i)) / (-delta);
                        hits_upper = true;
                    }
                }
                if (t_i < 0) t_i = 0;  // numerical shadow of a bound violation
            };

            double span = up_(enter) - lo_(enter);
            double t_min = span;
            for (int i = 0; i < m_; ++i) {
                double t_i;
                bool hu;
                row_limit(i, t_i, hu);
                t_min = std::min(t_min, t_i);
            }

            if (!std::isfinite(t_min)) {
                if (allow_unbounded) return Outcome::Unbounded;
                return Outcome::Failed;  // phase 1 is bounded; this is numerical
            }

            int leave_row = -1;
            bool leave_at_upper = false;
            double window = t_min + 1e-9 * (1.0 + std::abs(t_min));
            if (span > window) {  // a row blocks strictly before the own bound
                double best_pivot = 0;
                for (int i = 0; i < m_; ++i) {
                    double t_i;
                    bool hu;
                    row_limit(i, t_i, hu);
                    if (t_i > window) continue;
                    double mag = std::abs(ycol(i));
                    bool take;
                    if (bland) {
                        take = leave_row < 0 || basis_[i] < basis_[leave_row];
                    } else {
                        take = mag > best_pivot + 1e-15 ||
                               (std::abs(mag - best_pivot) <= 1e-15 && leave_row >= 0 &&
                                basis_[i] < basis_[leave_row]);
                    }
                    if (take) {
                        best_pivot = mag;
                        leave_row = i;
                        leave_at_upper = hu;
                    }
                }
            }
            double t_limit = t_min;

            if (t_limit <= 1e-12) ++degen_streak;
            else degen_streak = 0;
            if (degen_streak > 30) bland = true;
            else if (degen_streak == 0) bland = false;

            if (leave_row < 0) {
                // Entering variable travels to its opposite bound: bound flip.
                xB_ -= dir * span * ycol;
                state_[static_cast<std::size_t>(enter)] =
                    state_[static_cast<std::size_t>(enter)] == VS::AtLower ? VS::AtUpper
                                                                           : VS::AtLower;
                continue;
            }

            double enter_val = nonbasic_value(enter) + dir * t_limit;
            int leaving = basis_[leave_row];
            double pivot = ycol(leave_row);
            if (std::abs(pivot) < 1e-7 && pivots_since_refactor_ > 0) {
                if (!refactor()) return Outcome::Failed;
                --iters_;
                continue;  // retry with a clean inverse before accepting a weak pivot
            }
            if (std::abs(pivot) < kRatioEps) return Outcome::Failed;

            xB_ -= dir * t_limit * ycol;
            xB_(leave_row) = enter_val;
            basis_[leave_row] = enter;
            state_[static_cast<std::size_t>(enter)] = VS::Basic;
            state_[static_cast<std::size_t>(leaving)] = leave_at_upper ? VS::AtUpper : VS::AtLower;

            Eigen::RowVectorXd pivot_row = Binv_.row(leave_row) / pivot;
            for (int i = 0; i < m_; ++i) {
                if (i == leave_row) continue;
                double f = ycol(i);
                if (f != 0.0) Binv_.row(i) -= f * pivot_row;
            }
            Binv_.row(leave_row) = pivot_row;

            if (++pivots_since_refactor_ >= 128) {
                if (!refactor()) return Outcome::Failed;
            }
        }
    }

    bool check_solution(const Vec& x) const {
        double scale = p_.b.size() > 0 ? std::max(1.0, p_.b.cwiseAbs().maxCoeff()) : 1.0;
        if (m_ > 0) {
            Vec r = p_.A * x - p_.b;
            if (r.maxCoeff() > 1e-6 * scale) return false;
        }
        for (int j = 0; j < n_; ++j) {
            if (x(j) < lo_(j) - 1e-7 || x(j) > up_(j) + 1e-7) return false;
        }
        return true;
    }

    LpSolution finish_breakdown(LpSolution& sol, const std::string& why) {
        sol.status = LpSolution::Status::Breakdown;
        sol.iterations = iters_;
        sol.note = why;
        return sol;
    }
};

}  // namespace detail

inline LpSolution solve(const LpProblem& p, const SolveOptions& opt = {}) {
    p.validate();
    detail::Simplex s(p, opt);
    return s.run();
}

}  // namespace stlmpc
