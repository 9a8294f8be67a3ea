// Shared test oracles: brute-force LP solving by vertex enumeration and
// random problem generators.  Everything here is independent of the simplex
// implementation it checks.

#pragma once

#include "stlmpc/linprog.hpp"

#include <optional>
#include <random>
#include <vector>

namespace oracle {

using stlmpc::kInf;
using stlmpc::LpProblem;
using stlmpc::Mat;
using stlmpc::Vec;

struct BruteResult {
    bool feasible = false;
    double objective = -kInf;
    Vec x;
};

// Enumerate every basic point (n active constraints from rows and finite
// bounds), keep the feasible best.  Exact for pointed bounded regions, which
// the generators below guarantee.
inline BruteResult brute_force_lp(const LpProblem& p) {
    const int n = p.num_vars();
    std::vector<Vec> normals;
    std::vector<double> offsets;
    for (int r = 0; r < p.num_rows(); ++r) {
        normals.push_back(p.A.row(r).transpose());
        offsets.push_back(p.b(r));
    }
    for (int j = 0; j < n; ++j) {
        if (std::isfinite(p.upper(j))) {
            Vec e = Vec::Zero(n);
            e(j) = 1;
            normals.push_back(e);
            offsets.push_back(p.upper(j));
        }
        if (std::isfinite(p.lower(j))) {
            Vec e = Vec::Zero(n);
            e(j) = -1;
            normals.push_back(e);
            offsets.push_back(-p.lower(j));
        }
    }
    const int m = static_cast<int>(normals.size());
    BruteResult best;

    std::vector<int> idx(static_cast<std::size_t>(n));
    auto feasible = [&](const Vec& x) {
        for (int r = 0; r < m; ++r)
            if (normals[static_cast<std::size_t>(r)].dot(x) > offsets[static_cast<std::size_t>(r)] + 1e-8) return false;
        return true;
    };
    auto consider = [&](const Vec& x) {
        if (!feasible(x)) return;
        double obj = p.cost.dot(x);
        if (!best.feasible || obj > best.objective) {
            best.feasible = true;
            best.objective = obj;
            best.x = x;
        }
    };

    std::function<void(int, int)> rec = [&](int start, int chosen) {
        if (chosen == n) {
            Mat Asub(n, n);
            Vec bsub(n);
            for (int i = 0; i < n; ++i) {
                Asub.row(i) = normals[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])].transpose();
                bsub(i) = offsets[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
            }
            Eigen::FullPivLU<Mat> lu(Asub);
            if (lu.isInvertible()) consider(lu.solve(bsub));
            return;
        }
        for (int r = start; r < m; ++r) {
            idx[static_cast<std::size_t>(chosen)] = r;
            rec(r + 1, chosen + 1);
        }
    };
    if (m >= n) rec(0, 0);
    return best;
}

// ── Generators ──────────────────────────────────────────────────────────────

// Every variable boxed: the region is bounded, so the outcome is either
// Optimal (some vertex) or Infeasible.
inline LpProblem random_boxed_lp(std::mt19937& rng) {
    std::uniform_int_distribution<int> nvars(1, 6), nrows(0, 10);
    std::uniform_real_distribution<double> coef(-5, 5), width(0.5, 8);
    const int n = nvars(rng), m = nrows(rng);
    LpProblem p;
    p.cost.resize(n);
    for (int j = 0; j < n; ++j) p.cost(j) = coef(rng);
    p.A.resize(m, n);
    p.b.resize(m);
    for (int r = 0; r < m; ++r) {
        double norm = 0;
        do {
            for (int j = 0; j < n; ++j) p.A(r, j) = coef(rng);
            norm = p.A.row(r).cwiseAbs().maxCoeff();
        } while (norm < 0.1);
        p.b(r) = coef(rng);
    }
    p.lower.resize(n);
    p.upper.resize(n);
    for (int j = 0; j < n; ++j) {
        p.lower(j) = coef(rng);
        p.upper(j) = p.lower(j) + width(rng);
    }
    return p;
}

// Unbounded by construction: a known improving ray d >= 0 with A d <= 0 and
// no upper bounds on the variables it pushes.
inline LpProblem random_unbounded_lp(std::mt19937& rng) {
    std::uniform_int_distribution<int> nvars(1, 5), nrows(1, 8);
    std::uniform_real_distribution<double> coef(-5, 5), pos(0.2, 2);
    const int n = nvars(rng), m = nrows(rng);
    Vec d(n);
    for (int j = 0; j < n; ++j) d(j) = pos(rng);
    LpProblem p;
    p.cost.resize(n);
    for (int j = 0; j < n; ++j) p.cost(j) = pos(rng);  // cost.d > 0
    p.A.resize(m, n);
    p.b.resize(m);
    for (int r = 0; r < m; ++r) {
        Vec a(n);
        for (int j = 0; j < n; ++j) a(j) = coef(rng);
        double along = a.dot(d);
        if (along > 0) a -= (along / d.squaredNorm() + 0.1) * d;  // force a.d <= 0
        p.A.row(r) = a.transpose();
        p.b(r) = std::abs(coef(rng)) + 1;  // x = 0 stays feasible
    }
    p.lower = Vec::Zero(n);
    p.upper = Vec::Constant(n, kInf);
    return p;
}

// Infeasible by construction: x1 <= -1 against x1 >= 0, plus noise rows.
inline LpProblem random_infeasible_lp(std::mt19937& rng) {
    LpProblem p = random_boxed_lp(rng);
    const int n = p.num_vars();
    p.lower(0) = 0;
    p.upper(0) = std::max(p.upper(0), 1.0);
    Mat A2(p.A.rows() + 1, n);
    A2.topRows(p.A.rows()) = p.A;
    A2.row(p.A.rows()).setZero();
    A2(p.A.rows(), 0) = 1;
    Vec b2(p.b.size() + 1);
    b2.head(p.b.size()) = p.b;
    b2(p.b.size()) = -1;  // x1 <= -1
    p.A = A2;
    p.b = b2;
    return p;
}

}  // namespace oracle
