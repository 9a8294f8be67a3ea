// stlmpc/robustness.hpp — quantitative semantics over discrete signals
//
// Four evaluations over a windowed predicate signal:
//
//   boolean_sat       classical satisfaction, predicate true iff z >= 0
//   space_robustness  min/max margin semantics (worst-case satisfaction)
//   dasr              averaged semantics: G averages its window, the until
//                     averages its left operand up to the witness step
//   dsasr             dasr with the witness-step maximum replaced by a
//                     chosen step k1, which makes the value affine in z
//
// All evaluations reject windows that do not cover [k, k + h]; silently
// clamping a window would corrupt the averages.

#pragma once

#include "stlmpc/common.hpp"
#include "stlmpc/formula.hpp"

#include <functional>

namespace stlmpc {

// ── Signal ──────────────────────────────────────────────────────────────────
// Contiguous window of predicate vectors; row r holds z(start + r).

struct Signal {
    int start = 0;
    Mat z;  // (#steps) x (#predicates)

    int end() const { return start + static_cast<int>(z.rows()) - 1; }
    int preds() const { return static_cast<int>(z.cols()); }

    double value(int k, int pred /*1-based*/) const {
        if (k < start || k > end())
            throw WindowError("signal window [" + std::to_string(start) + "," +
                              std::to_string(end()) + "] does not cover step " +
                              std::to_string(k));
        if (pred < 1 || pred > preds())
            throw DimensionError("signal has no predicate " + std::to_string(pred));
        return z(k - start, pred - 1);
    }
};

inline Vec eval_predicates(const PredicateMap& pm, const Vec& x) {
    if (x.size() != pm.state_dim())
        throw DimensionError("state has dimension " + std::to_string(x.size()) +
                             ", PredicateMap expects " + std::to_string(pm.state_dim()));
    return pm.C * x + pm.c;
}

// States as rows; row r is x(start + r).
inline Signal make_signal(const PredicateMap& pm, const Mat& states, int start = 0) {
    Signal s;
    s.start = start;
    s.z.resize(states.rows(), pm.size());
    for (Eigen::Index r = 0; r < states.rows(); ++r)
        s.z.row(r) = (pm.C * states.row(r).transpose() + pm.c).transpose();
    return s;
}

// ── K1 policy ───────────────────────────────────────────────────────────────
// Chooses the witness step for F and U nodes in the simplified semantics.
// Must return a value inside [eval_step + lo, eval_step + hi] and inside the
// signal window; evaluation throws otherwise.

struct K1Request {
    Formula::Kind op;  // Until or Eventually
    int eval_step = 0;
    int lo = 0, hi = 0;
    int window_lo = 0, window_hi = 0;
};

using K1Policy = std::function<int(const K1Request&)>;

// The stock rule: take the last step of the interval, which leaves the system
// the most time to settle.
inline int k1_latest(const K1Request& q) { return q.eval_step + q.hi; }

namespace detail {

inline void require_window(const Formula& f, const Signal& s, int k) {
    int h = formula_length(f);
    if (k < s.start || k + h > s.end())
        throw WindowError("evaluation at step " + std::to_string(k) + " needs window [" +
                          std::to_string(k) + "," + std::to_string(k + h) +
                          "], signal covers [" + std::to_string(s.start) + "," +
                          std::to_string(s.end()) + "]");
}

inline int checked_k1(const K1Policy& policy, const K1Request& q) {
    int k1 = policy(q);
    if (k1 < q.eval_step + q.lo || k1 > q.eval_step + q.hi)
        throw WindowError("k1 policy returned " + std::to_string(k1) +
                          " outside [k+a,k+b] = [" + std::to_string(q.eval_step + q.lo) + "," +
                          std::to_string(q.eval_step + q.hi) + "]");
    if (k1 < q.window_lo || k1 > q.window_hi)
        throw WindowError("k1 policy returned " + std::to_string(k1) +
                          " outside the signal window");
    return k1;
}

}  // namespace detail

// ── Boolean satisfaction ────────────────────────────────────────────────────

inline bool boolean_sat(const Formula& f, const Signal& s, int k) {
    using K = Formula::Kind;
    detail::require_window(f, s, k);
    switch (f.kind) {
        case K::Predicate: {
            double v = s.value(k, f.pred);
            return f.negated ? -v >= 0 : v >= 0;
        }
        case K::And:
            for (const auto& c : f.children)
                if (!boolean_sat(c, s, k)) return false;
            return true;
        case K::Or:
            for (const auto& c : f.children)
                if (boolean_sat(c, s, k)) return true;
            return false;
        case K::Until:
            for (int k1 = k + f.lo; k1 <= k + f.hi; ++k1) {
                if (!boolean_sat(f.children[1], s, k1)) continue;
                bool lhs_holds = true;
                for (int k2 = k; k2 <= k1 && lhs_holds; ++k2)
                    lhs_holds = boolean_sat(f.children[0], s, k2);
                if (lhs_holds) return true;
            }
            return false;
        case K::Eventually:
            for (int k1 = k + f.lo; k1 <= k + f.hi; ++k1)
                if (boolean_sat(f.children[0], s, k1)) return true;
            return false;
        case K::Always:
            for (int k1 = k + f.lo; k1 <= k + f.hi; ++k1)
                if (!boolean_sat(f.children[0], s, k1)) return false;
            return true;
    }
    throw Error("boolean_sat: bad kind");
}

// ── Space robustness ────────────────────────────────────────────────────────

inline double space_robustness(const Formula& f, const Signal& s, int k) {
    using K = Formula::Kind;
    detail::require_window(f, s, k);
    switch (f.kind) {
        case K::Predicate: {
            double v = s.value(k, f.pred);
            return f.negated ? -v : v;
        }
        case K::And: {
            double r = kInf;
            for (const auto& c : f.children) r = std::min(r, space_robustness(c, s, k));
            return r;
        }
        case K::Or: {
            double r = -kInf;
            for (const auto& c : f.children) r = std::max(r, space_robustness(c, s, k));
            return r;
        }
        case K::Until: {
            double best = -kInf;
            double lhs_min = kInf;
            for (int k2 = k; k2 < k + f.lo; ++k2)
                lhs_min = std::min(lhs_min, space_robustness(f.children[0], s, k2));
            for (int k1 = k + f.lo; k1 <= k + f.hi; ++k1) {
                lhs_min = std::min(lhs_min, space_robustness(f.children[0], s, k1));
                best = std::max(best, std::min(space_robustness(f.children[1], s, k1), lhs_min));
            }
            return best;
        }
        case K::Eventually: {
            double r = -kInf;
            for (int k1 = k + f.lo; k1 <= k + f.hi; ++k1)
                r = std::max(r, space_robustness(f.children[0], s, k1));
            return r;
        }
        case K::Always: {
            double r = kInf;
            for (int k1 = k + f.lo; k1 <= k + f.hi; ++k1)
                r = std::min(r, space_robustness(f.children[0], s, k1));
            return r;
        }
    }
    throw Error("space_robustness: bad kind");
}

// ── Discrete Average Space Robustness ───────────────────────────────────────

inline double dasr(const Formula& f, const Signal& s, int k) {
    using K = Formula::Kind;
    detail::require_window(f, s, k);
    switch (f.kind) {
        case K::Predicate: {
            double v = s.value(k, f.pred);
            return f.negated ? -v : v;
        }
        case K::And: {
            double r = kInf;
            for (const auto& c : f.children) r = std::min(r, dasr(c, s, k));
            return r;
        }
        case K::Or: {
            double r = -kInf;
            for (const auto& c : f.children) r = std::max(r, dasr(c, s, k));
            return r;
        }
        case K::Until: {
            // Running average of the left operand starts at k, not k + a;
            // the lower bound only restricts the witness range.
            double best = -kInf;
            double lhs_sum = 0;
            for (int k2 = k; k2 < k + f.lo; ++k2) lhs_sum += dasr(f.children[0], s, k2);
            for (int k1 = k + f.lo; k1 <= k + f.hi; ++k1) {
                lhs_sum += dasr(f.children[0], s, k1);
                double avg = lhs_sum / static_cast<double>(k1 - k + 1);
                best = std::max(best, 0.5 * (avg + dasr(f.children[1], s, k1)));
            }
            return best;
        }
        case K::Eventually: {
            double r = -kInf;
            for (int k1 = k + f.lo; k1 <= k + f.hi; ++k1)
                r = std::max(r, dasr(f.children[0], s, k1));
            return r;
        }
        case K::Always: {
            double sum = 0;
            for (int k1 = k + f.lo; k1 <= k + f.hi; ++k1) sum += dasr(f.children[0], s, k1);
            return sum / static_cast<double>(f.hi - f.lo + 1);
        }
    }
    throw Error("dasr: bad kind");
}

// ── Discrete Simplified Average Space Robustness ────────────────────────────

inline double dsasr(const Formula& f, const Signal& s, int k, const K1Policy& policy = k1_latest) {
    using K = Formula::Kind;
    detail::require_window(f, s, k);
    switch (f.kind) {
        case K::Predicate: {
            double v = s.value(k, f.pred);
            return f.negated ? -v : v;
        }
        case K::And: {
            double r = kInf;
            for (const auto& c : f.children) r = std::min(r, dsasr(c, s, k, policy));
            return r;
        }
        case K::Or: {
            double r = -kInf;
            for (const auto& c : f.children) r = std::max(r, dsasr(c, s, k, policy));
            return r;
        }
        case K::Until: {
            int k1 = detail::checked_k1(
                policy, {f.kind, k, f.lo, f.hi, s.start, s.end()});
            double lhs_sum = 0;
            for (int k2 = k; k2 <= k1; ++k2) lhs_sum += dsasr(f.children[0], s, k2, policy);
            double avg = lhs_sum / static_cast<double>(k1 - k + 1);
            return 0.5 * (avg + dsasr(f.children[1], s, k1, policy));
        }
        case K::Eventually: {
            int k1 = detail::checked_k1(
                policy, {f.kind, k, f.lo, f.hi, s.start, s.end()});
            return dsasr(f.children[0], s, k1, policy);
        }
        case K::Always: {
            double sum = 0;
            for (int k1 = k + f.lo; k1 <= k + f.hi; ++k1)
                sum += dsasr(f.children[0], s, k1, policy);
            return sum / static_cast<double>(f.hi - f.lo + 1);
        }
    }
    throw Error("dsasr: bad kind");
}

}  // namespace stlmpc
