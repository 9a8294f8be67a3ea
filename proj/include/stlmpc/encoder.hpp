// stlmpc/encoder.hpp — linear-program encoding of fragment specifications
//
// The pipeline turns a conjunction of temporal members into one LP:
//
//   build_stacked      prediction matrices H1, H2 with z_st = H1 x0 + H2 u + 1(x)c
//   build_E_*          per-operator cost matrices: row i holds the simplified
//                      average-robustness contribution of evaluation step
//                      k' = k_l + i - 1 as coefficients over stacked
//                      operand values ("z_all")
//   pad/QR             conjunctions: epigraph variables u_x with
//                      Q u_x <= R z_all, cost 1.u_x
//   hard rows          per-(step, predicate) satisfaction inequalities
//   soften             one slack column relaxing every hard row, penalty -M
//
// Window bookkeeping: with formula length h and horizon N, evaluation steps
// run over [k_l, k_h] = [k0-h+1, k0+N-h].  Entries of z_all at steps <= k0
// are recorded history and fold into constants; later entries are affine in
// the stacked input through H1/H2.  The column span of an E matrix starts at
// k_l and is widened just enough to hold every referenced step, so a fixture
// whose k1 choices stay inside [k_l, k_h] reproduces the N-block layout
// exactly while the stock "latest step" rule reaches to k0 + N.

#pragma once

#include "stlmpc/common.hpp"
#include "stlmpc/formula.hpp"
#include "stlmpc/linprog.hpp"
#include "stlmpc/system.hpp"

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <tuple>
#include <vector>

namespace stlmpc {

// ── Stacked prediction model ────────────────────────────────────────────────

struct StackedModel {
    Mat H1;      // (G*N) x n,  block row j holds C A^(j+1)
    Mat H2;      // (G*N) x (m*N), block (i,j) holds C A^(i-j) B for i >= j
    Vec offset;  // 1_N (x) c
    int horizon = 0;
    int n_preds = 0;

    // Row of block t-k0-1 (time t in [k0+1, k0+N]), predicate g 1-based.
    int row(int steps_ahead, int g) const { return n_preds * (steps_ahead - 1) + (g - 1); }
};

inline StackedModel build_stacked(const LtiSystem& sys, const PredicateMap& pm, int N) {
    sys.validate();
    pm.validate();
    if (pm.state_dim() != sys.state_dim())
        throw DimensionError("PredicateMap state dimension does not match the system");
    if (N < 1) throw EncodeError("prediction horizon must be at least 1");

    const int n = sys.state_dim(), m = sys.input_dim(), G = pm.size();
    StackedModel sm;
    sm.horizon = N;
    sm.n_preds = G;
    sm.H1.setZero(G * N, n);
    sm.H2.setZero(G * N, m * N);
    sm.offset.resize(G * N);
    for (int i = 0; i < N; ++i) sm.offset.segment(G * i, G) = pm.c;  // 1_N (x) c

    Mat Apow = sys.A;  // A^(i+1) while filling block i
    std::vector<Mat> CAB(static_cast<std::size_t>(N));  // C A^j B
    CAB[0] = pm.C * sys.B;
    Mat Aj = Mat::Identity(n, n);
    for (int j = 1; j < N; ++j) {
        Aj *= sys.A;
        CAB[static_cast<std::size_t>(j)] = pm.C * Aj * sys.B;
    }
    for (int i = 0; i < N; ++i) {
        sm.H1.block(G * i, 0, G, n) = pm.C * Apow;
        Apow *= sys.A;
        for (int j = 0; j <= i; ++j)
            sm.H2.block(G * i, m * j, G, m) = CAB[static_cast<std::size_t>(i - j)];
    }
    return sm;
}

// ── E matrices ──────────────────────────────────────────────────────────────

struct EMatrix {
    Mat coeffs;      // rows x (n_preds * blocks)
    int k_lo = 0;    // time step of the first column block
    int n_preds = 1;

    int rows() const { return static_cast<int>(coeffs.rows()); }
    int blocks() const { return static_cast<int>(coeffs.cols()) / n_preds; }
    int k_hi() const { return k_lo + blocks() - 1; }
    int col(int t, int g /*1-based*/) const { return n_preds * (t - k_lo) + (g - 1); }
};

using K1Map = std::function<int(int)>;  // evaluation step k' -> chosen k1(k')

namespace detail {
inline void check_k1_range(int k1, int kmin, int kmax, int kp) {
    if (k1 < kmin || k1 > kmax)
        throw EncodeError("k1(" + std::to_string(kp) + ") = " + std::to_string(k1) +
                          " outside the representable steps [" + std::to_string(kmin) + "," +
                          std::to_string(kmax) + "]");
}
}  // namespace detail

// Until operator: two operand columns per block (lhs, rhs).  Row for k' puts
// 1/2 on rhs(k1) and spreads 1/(2(k1-k'+1)) over lhs(k') .. lhs(k1).
inline EMatrix build_E_until(int N, const K1Map& k1map, int h, int k0 = 0, int n_blocks = 0) {
    if (n_blocks <= 0) n_blocks = N;
    EMatrix e;
    e.n_preds = 2;
    e.k_lo = k0 - h + 1;
    e.coeffs.setZero(N, 2 * n_blocks);
    for (int i = 0; i < N; ++i) {
        int kp = e.k_lo + i;
        int k1 = k1map(kp);
        if (k1 < kp) throw EncodeError("k1 before its evaluation step");
        detail::check_k1_range(k1, e.k_lo, e.k_hi(), kp);
        e.coeffs(i, e.col(k1, 2)) = 0.5;
        double w = 0.5 / static_cast<double>(k1 - kp + 1);
        for (int t = kp; t <= k1; ++t) e.coeffs(i, e.col(t, 1)) = w;
    }
    return e;
}

// Eventually: one operand column per block; row for k' selects operand(k1).
inline EMatrix build_E_eventually(int N, const K1Map& k1map, int h, int k0 = 0, int n_blocks = 0) {
    if (n_blocks <= 0) n_blocks = N;
    EMatrix e;
    e.n_preds = 1;
    e.k_lo = k0 - h + 1;
    e.coeffs.setZero(N, n_blocks);
    for (int i = 0; i < N; ++i) {
        int kp = e.k_lo + i;
        int k1 = k1map(kp);
        detail::check_k1_range(k1, e.k_lo, e.k_hi(), kp);
        e.coeffs(i, e.col(k1, 1)) = 1.0;
    }
    return e;
}

// Always: row for k' averages operand over [k'+a, k'+b].  A window running
// past the last block slides back to end on it, keeping every row a proper
// average; spans wider than the block count cannot fit at all.
inline EMatrix build_E_always(int N, int a, int b, int h = -1, int k0 = 0, int n_blocks = 0) {
    if (h < 0) h = b;
    if (n_blocks <= 0) n_blocks = N;
    if (b - a + 1 > n_blocks)
        throw EncodeError("always-window of " + std::to_string(b - a + 1) +
                          " steps exceeds the " + std::to_string(n_blocks) + " available columns");
    EMatrix e;
    e.n_preds = 1;
    e.k_lo = k0 - h + 1;
    e.coeffs.setZero(N, n_blocks);
    double w = 1.0 / static_cast<double>(b - a + 1);
    for (int i = 0; i < N; ++i) {
        int kp = e.k_lo + i;
        int t_end = std::min(kp + b, e.k_hi());
        int t_begin = t_end - (b - a);
        if (t_begin < e.k_lo)
            throw EncodeError("always-window for step " + std::to_string(kp) +
                              " does not fit the column span");
        for (int t = t_begin; t <= t_end; ++t) e.coeffs(i, e.col(t, 1)) = w;
    }
    return e;
}

// Interleaves a member's columns into the joint operand stack of a
// conjunction: time block t keeps one slot per member operand, in member
// order, so members address disjoint columns of the shared z_all.
inline EMatrix pad_for_conjunction(const EMatrix& e, int member_index,
                                   const std::vector<int>& preds_per_member) {
    if (member_index < 0 || member_index >= static_cast<int>(preds_per_member.size()))
        throw EncodeError("pad_for_conjunction: bad member index");
    int joint = 0, before = 0;
    for (int j = 0; j < static_cast<int>(preds_per_member.size()); ++j) {
        if (j < member_index) before += preds_per_member[static_cast<std::size_t>(j)];
        joint += preds_per_member[static_cast<std::size_t>(j)];
    }
    EMatrix out;
    out.k_lo = e.k_lo;
    out.n_preds = joint;
    out.coeffs.setZero(e.rows(), static_cast<Eigen::Index>(joint) * e.blocks());
    for (int blk = 0; blk < e.blocks(); ++blk)
        for (int g = 0; g < e.n_preds; ++g)
            out.coeffs.col(static_cast<Eigen::Index>(joint) * blk + before + g) =
                e.coeffs.col(static_cast<Eigen::Index>(e.n_preds) * blk + g);
    return out;
}

// Theorem-2 constraint pair: Q u_x <= R z_all with one epigraph variable per
// row index.  Row order pairs each step with every member before moving on:
// E1(1,:), E2(1,:), ..., E1(N,:), E2(N,:).  Q carries zero columns for the
// inputs so both matrices act on the full decision vector.
inline std::pair<Mat, Mat> build_QR(const std::vector<EMatrix>& padded, int n_inputs) {
    if (padded.empty()) throw EncodeError("build_QR: no members");
    const int J = static_cast<int>(padded.size());
    const int N = padded.front().rows();
    const Eigen::Index cols = padded.front().coeffs.cols();
    for (const auto& e : padded) {
        if (e.rows() != N) throw EncodeError("build_QR: row count mismatch");
        if (e.coeffs.cols() != cols) throw EncodeError("build_QR: column count mismatch");
    }
    Mat Q = Mat::Zero(static_cast<Eigen::Index>(J) * N, N + n_inputs);
    Mat R = Mat::Zero(static_cast<Eigen::Index>(J) * N, cols);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < J; ++j) {
            Q(static_cast<Eigen::Index>(i) * J + j, i) = 1.0;
            R.row(static_cast<Eigen::Index>(i) * J + j) =
                padded[static_cast<std::size_t>(j)].coeffs.row(i);
        }
    return {Q, R};
}

// Prepends a zero block so the stacked predicate map accepts the extended
// decision vector [u_x | u]: z_st = H1 x0 + H2man [u_x; u] + 1(x)c.
inline Mat build_H2man(const Mat& H2, int N) {
    Mat out = Mat::Zero(H2.rows(), N + H2.cols());
    out.rightCols(H2.cols()) = H2;
    return out;
}

// One-time formulas keep a single evaluation instant: the row whose
// remaining window matches how long the event has been active.
inline EMatrix select_one_time_row(const EMatrix& e, int h, int k_event) {
    if (k_event < 0) throw EncodeError("k_event must be nonnegative");
    if (k_event >= h) throw EncodeError("one-time window elapsed (k_event >= formula length)");
    int row = h - k_event;  // 1-based
    if (row > e.rows()) throw EncodeError("selected row exceeds the E matrix");
    EMatrix out;
    out.k_lo = e.k_lo;
    out.n_preds = e.n_preds;
    out.coeffs = e.coeffs.row(row - 1);
    return out;
}

// ── Branch form ─────────────────────────────────────────────────────────────
// A specification body in the supported fragment expands into disjunction
// branches; each branch is a conjunction of temporal members whose operands
// are conjunctions of literals.

struct Literal {
    int pred = 1;
    bool negated = false;
    bool operator<(const Literal& o) const {
        return pred != o.pred ? pred < o.pred : negated < o.negated;
    }
    bool operator==(const Literal& o) const { return pred == o.pred && negated == o.negated; }
};

struct Group {
    std::vector<Literal> lits;  // conjunction, nonempty
};

struct TemporalMember {
    Formula::Kind op = Formula::Kind::Eventually;
    int lo = 0, hi = 0;
    Group lhs;  // F/G operand, or until's left operand
    Group rhs;  // until only
    int source_index = 0;  // position among temporal operators in the source text

    int length() const { return hi; }
};

struct Branch {
    std::vector<TemporalMember> members;
    int length() const {
        int h = 0;
        for (const auto& mbr : members) h = std::max(h, mbr.length());
        return h;
    }
};

namespace detail {

inline void index_members(const Formula& f, int& next, std::vector<const Formula*>& order) {
    if (is_temporal_member(f)) {
        order.push_back(&f);
        ++next;
        return;
    }
    if (f.kind == Formula::Kind::And || f.kind == Formula::Kind::Or) {
        for (const auto& c : f.children) index_members(c, next, order);
        return;
    }
    throw EncodeError("specification is outside the supported fragment: " + to_string(f));
}

inline std::vector<std::vector<const Formula*>> member_dnf(const Formula& f) {
    if (is_temporal_member(f)) return {{&f}};
    if (f.kind == Formula::Kind::Or) {
        std::vector<std::vector<const Formula*>> out;
        for (const auto& c : f.children) {
            auto sub = member_dnf(c);
            out.insert(out.end(), sub.begin(), sub.end());
        }
        return out;
    }
    if (f.kind == Formula::Kind::And) {
        std::vector<std::vector<const Formula*>> acc{{}};
        for (const auto& c : f.children) {
            auto sub = member_dnf(c);
            std::vector<std::vector<const Formula*>> next;
            for (const auto& left : acc)
                for (const auto& right : sub) {
                    auto merged = left;
                    merged.insert(merged.end(), right.begin(), right.end());
                    next.push_back(std::move(merged));
                }
            acc = std::move(next);
        }
        return acc;
    }
    throw EncodeError("specification is outside the supported fragment: " + to_string(f));
}

inline std::vector<Group> group_dnf(const Formula& f) {
    if (f.kind == Formula::Kind::Predicate) return {Group{{Literal{f.pred, f.negated}}}};
    if (f.kind == Formula::Kind::Or) {
        std::vector<Group> out;
        for (const auto& c : f.children) {
            auto sub = group_dnf(c);
            out.insert(out.end(), sub.begin(), sub.end());
        }
        return out;
    }
    if (f.kind == Formula::Kind::And) {
        std::vector<Group> acc{Group{}};
        for (const auto& c : f.children) {
            auto sub = group_dnf(c);
            std::vector<Group> next;
            for (const auto& left : acc)
                for (const auto& right : sub) {
                    Group merged = left;
                    merged.lits.insert(merged.lits.end(), right.lits.begin(), right.lits.end());
                    next.push_back(std::move(merged));
                }
            acc = std::move(next);
        }
        return acc;
    }
    throw EncodeError("temporal operand is not predicate-level: " + to_string(f));
}

}  // namespace detail

// Enumerates the disjunction branches of a fragment body.  Both the
// member-level combination and predicate-level disjunctions inside operands
// branch; the cross product is capped to keep runaway inputs loud.
inline std::vector<Branch> expand_branches(const Formula& body, int max_branches = 256) {
    int next = 0;
    std::vector<const Formula*> order;
    detail::index_members(body, next, order);
    auto source_of = [&](const Formula* f) {
        for (std::size_t i = 0; i < order.size(); ++i)
            if (order[i] == f) return static_cast<int>(i);
        throw Error("expand_branches: member not indexed");
    };

    std::vector<Branch> out;
    for (const auto& combo : detail::member_dnf(body)) {
        // Per member, the operand-level choices.
        std::vector<std::vector<TemporalMember>> choices;
        for (const Formula* mf : combo) {
            std::vector<TemporalMember> variants;
            const int src = source_of(mf);
            if (mf->kind == Formula::Kind::Until) {
                for (const auto& lg : detail::group_dnf(mf->children[0]))
                    for (const auto& rg : detail::group_dnf(mf->children[1])) {
                        TemporalMember t;
                        t.op = mf->kind;
                        t.lo = mf->lo;
                        t.hi = mf->hi;
                        t.lhs = lg;
                        t.rhs = rg;
                        t.source_index = src;
                        variants.push_back(std::move(t));
                    }
            } else {
                for (const auto& g : detail::group_dnf(mf->children[0])) {
                    TemporalMember t;
                    t.op = mf->kind;
                    t.lo = mf->lo;
                    t.hi = mf->hi;
                    t.lhs = g;
                    t.source_index = src;
                    variants.push_back(std::move(t));
                }
            }
            choices.push_back(std::move(variants));
        }
        std::vector<Branch> partial{Branch{}};
        for (const auto& variants : choices) {
            std::vector<Branch> grown;
            for (const auto& base : partial)
                for (const auto& v : variants) {
                    Branch b = base;
                    b.members.push_back(v);
                    grown.push_back(std::move(b));
                }
            partial = std::move(grown);
            if (static_cast<int>(partial.size()) > max_branches)
                throw EncodeError("disjunction expansion exceeds " +
                                  std::to_string(max_branches) + " branches");
        }
        out.insert(out.end(), partial.begin(), partial.end());
        if (static_cast<int>(out.size()) > max_branches)
            throw EncodeError("disjunction expansion exceeds " + std::to_string(max_branches) +
                              " branches");
    }
    return out;
}

// ── Hard constraint enumeration ─────────────────────────────────────────────

struct HardRequirement {
    int t = 0;
    Literal lit;
};

// The satisfaction inequalities a member imposes: until keeps its left
// operand nonnegative from each evaluation step through k1 and its right
// operand nonnegative at k1; eventually pins the operand at k1; always
// covers the whole window.  Conjunction operands expand to one requirement
// per literal.
inline std::vector<HardRequirement> hard_requirements(const TemporalMember& mbr,
                                                      const std::vector<int>& eval_steps,
                                                      const K1Map& k1map) {
    std::vector<HardRequirement> rows;
    auto emit = [&](int t, const Group& g) {
        for (const auto& lit : g.lits) rows.push_back({t, lit});
    };
    for (int kp : eval_steps) {
        switch (mbr.op) {
            case Formula::Kind::Until: {
                int k1 = k1map(kp);
                for (int t = kp; t <= k1; ++t) emit(t, mbr.lhs);
                emit(k1, mbr.rhs);
                break;
            }
            case Formula::Kind::Eventually:
                emit(k1map(kp), mbr.lhs);
                break;
            case Formula::Kind::Always:
                for (int t = kp + mbr.lo; t <= kp + mbr.hi; ++t) emit(t, mbr.lhs);
                break;
            default:
                throw EncodeError("hard_requirements: not a temporal member");
        }
    }
    return rows;
}

// ── Assembly ────────────────────────────────────────────────────────────────

struct MemberK1 {
    std::optional<int> offset;             // k1(k') = k' + offset
    std::optional<std::map<int, int>> table;  // (k'-k0) -> (k1-k0)
};

struct AssembleOptions {
    int N = 1;
    bool soften = false;
    double M = 0;  // 0 -> 1e6 * largest cost coefficient when softening
    std::optional<int> one_time_k_event;
    std::map<int, MemberK1> member_k1;  // keyed by TemporalMember::source_index
    bool include_hard = true;
    // Tightening on future hard rows (z >= margin).  A plan whose active
    // constraints sit exactly on zero realizes one rounding error below it;
    // the margin keeps realized trajectories on the satisfying side.
    double hard_margin = 0;
    // One-time programs price only the trigger row, so the optimum is a
    // vertex that may touch hard-constraint boundaries at every other step.
    // A small reward on the always-members' per-step margins picks interior
    // plans from the optimal face instead, which survive disturbances.
    double interior_bias = 0;
};

struct RowTag {
    enum class Kind { Epigraph, GroupValue, Hard };
    Kind kind = Kind::Hard;
    int member = -1;   // index within the branch
    int t = 0;
    Literal lit;
    int e_row = -1;    // epigraph: E-matrix row index (0-based)
};

struct EncodedProgram {
    LpProblem lp;
    double cost_offset = 0;  // constants folded out of the cost
    int n_ux = 0, n_w = 0, n_inputs = 0;
    int m_inputs = 0;  // inputs per step
    bool softened = false;
    bool has_history_slack = false;
    double M = 0;
    int k0 = 0, h = 0, k_l = 0, k_h = 0, n_blocks = 0, horizon = 0;
    std::vector<RowTag> tags;
    std::vector<std::string> warnings;

    int u_start() const { return n_ux + n_w; }
    int xi_col() const { return softened ? n_ux + n_w + n_inputs : -1; }
    int xi_history_col() const { return has_history_slack ? xi_col() + 1 : -1; }

    Vec first_input(const Vec& decision) const {
        return decision.segment(u_start(), m_inputs);
    }
    double slack_value(const Vec& decision) const {
        return softened ? decision(xi_col()) : 0.0;
    }
    double history_slack_value(const Vec& decision) const {
        return has_history_slack ? decision(xi_history_col()) : 0.0;
    }
};

// Adds the slack: every hard row r becomes a.x - xi <= b, the cost picks up
// -M xi, and xi >= 0 joins the decision vector.  Rows over recorded steps
// are facts the inputs cannot change, so they relax through a second slack
// of their own; otherwise one violated sample would relax every remaining
// obligation by the same amount and the plan would stop pursuing them.
// Cost rows keep their predicate coefficients untouched.
inline void soften(EncodedProgram& p, double M) {
    if (p.softened) throw EncodeError("program already softened");
    if (M < 0) throw EncodeError("penalty M must be nonnegative");
    if (M == 0) p.warnings.push_back("soften: M = 0 leaves the slack unpenalized");
    bool any_past = false;
    for (const auto& tag : p.tags)
        if (tag.kind == RowTag::Kind::Hard && tag.t <= p.k0) any_past = true;
    const int old_n = p.lp.num_vars();
    const int added = any_past ? 2 : 1;
    p.lp.cost.conservativeResize(old_n + added);
    p.lp.cost.tail(added).setConstant(-M);
    p.lp.A.conservativeResize(Eigen::NoChange, old_n + added);
    p.lp.A.rightCols(added).setZero();
    for (std::size_t r = 0; r < p.tags.size(); ++r) {
        if (p.tags[r].kind != RowTag::Kind::Hard) continue;
        bool past = p.tags[r].t <= p.k0;
        p.lp.A(static_cast<Eigen::Index>(r), past ? old_n + 1 : old_n) = -1.0;
    }
    p.lp.lower.conservativeResize(old_n + added);
    p.lp.upper.conservativeResize(old_n + added);
    p.lp.lower.tail(added).setZero();
    p.lp.upper.tail(added).setConstant(kInf);
    p.softened = true;
    p.has_history_slack = any_past;
    p.M = M;
}

namespace detail {

// Shared window plan between assembly and the debug dump.
struct EncodePlan {
    int h = 0, k_l = 0, k_h = 0, n_blocks = 0;
    std::vector<int> eval_steps;
    std::vector<std::vector<int>> k1;  // per member, aligned with eval_steps (unused for G)
};

inline int resolve_k1(const TemporalMember& mbr, const MemberK1* cfg, int kp, int k0) {
    int k1 = kp + mbr.hi;
    if (cfg) {
        if (cfg->table) {
            auto it = cfg->table->find(kp - k0);
            if (it == cfg->table->end())
                throw EncodeError("k1 table has no entry for evaluation step " +
                                  std::to_string(kp));
            k1 = k0 + it->second;
        } else if (cfg->offset) {
            k1 = kp + *cfg->offset;
        }
    }
    if (k1 < kp + mbr.lo || k1 > kp + mbr.hi)
        throw EncodeError("k1 = " + std::to_string(k1) + " outside [k+a, k+b] for step " +
                          std::to_string(kp));
    return k1;
}

inline EncodePlan plan_encoding(const Branch& branch, int k0, const AssembleOptions& opts) {
    if (branch.members.empty()) throw EncodeError("empty branch");
    EncodePlan plan;
    plan.h = branch.length();
    if (opts.N < plan.h)
        throw EncodeError("horizon N = " + std::to_string(opts.N) +
                          " is smaller than the formula length h = " + std::to_string(plan.h));
    plan.k_l = k0 - plan.h + 1;
    plan.k_h = k0 + opts.N - plan.h;

    if (opts.one_time_k_event) {
        int ke = *opts.one_time_k_event;
        if (ke < 0) throw EncodeError("k_event must be nonnegative");
        if (ke >= plan.h) throw EncodeError("one-time window elapsed (k_event >= formula length)");
        plan.eval_steps = {k0 - ke};
    } else {
        for (int kp = plan.k_l; kp <= plan.k_h; ++kp) plan.eval_steps.push_back(kp);
    }

    int max_t = plan.k_h;  // columns always span the evaluation steps
    plan.k1.resize(branch.members.size());
    for (std::size_t j = 0; j < branch.members.size(); ++j) {
        const auto& mbr = branch.members[j];
        const MemberK1* cfg = nullptr;
        auto it = opts.member_k1.find(mbr.source_index);
        if (it != opts.member_k1.end()) cfg = &it->second;
        for (int kp : plan.eval_steps) {
            if (mbr.op == Formula::Kind::Always) {
                max_t = std::max(max_t, kp + mbr.hi);
            } else {
                int k1 = resolve_k1(mbr, cfg, kp, k0);
                plan.k1[j].push_back(k1);
                max_t = std::max(max_t, k1);
            }
        }
        if (max_t > k0 + opts.N)
            throw EncodeError("member " + std::to_string(j) +
                              " references steps beyond the prediction horizon");
    }
    plan.n_blocks = std::max(opts.N, max_t - plan.k_l + 1);
    return plan;
}

}  // namespace detail

// Builds the member's E matrix exactly as the dump and fixtures expect,
// using the same k1 resolution as assembly.
inline EMatrix build_member_E(const Branch& branch, int member, int k0,
                              const AssembleOptions& opts) {
    auto plan = detail::plan_encoding(branch, k0, opts);
    const auto& mbr = branch.members[static_cast<std::size_t>(member)];
    const MemberK1* cfg = nullptr;
    auto it = opts.member_k1.find(mbr.source_index);
    if (it != opts.member_k1.end()) cfg = &it->second;
    K1Map k1map = [&](int kp) { return detail::resolve_k1(mbr, cfg, kp, k0); };
    EMatrix e;
    switch (mbr.op) {
        case Formula::Kind::Until:
            e = build_E_until(opts.N, k1map, plan.h, k0, plan.n_blocks);
            break;
        case Formula::Kind::Eventually:
            e = build_E_eventually(opts.N, k1map, plan.h, k0, plan.n_blocks);
            break;
        case Formula::Kind::Always:
            e = build_E_always(opts.N, mbr.lo, mbr.hi, plan.h, k0, plan.n_blocks);
            break;
        default:
            throw EncodeError("build_member_E: not a temporal member");
    }
    if (opts.one_time_k_event) e = select_one_time_row(e, plan.h, *opts.one_time_k_event);
    return e;
}

namespace detail {

struct LinExpr {
    Vec coeffs;  // over the pre-slack decision vector
    double cst = 0;
};

class Assembler {
public:
    Assembler(const Branch& branch, const LtiSystem& sys, const PredicateMap& pm, const Vec& x0,
              const Mat& past, int k0, const AssembleOptions& opts)
        : branch_(branch), sys_(sys), pm_(pm), x0_(x0), past_(past), k0_(k0), opts_(opts) {}

    EncodedProgram run() {
        plan_ = plan_encoding(branch_, k0_, opts_);
        validate_inputs();
        stacked_ = build_stacked(sys_, pm_, opts_.N);
        allocate_layout();
        build_cost();
        build_w_rows();
        if (opts_.include_hard) build_hard_rows();
        pack();
        if (opts_.soften) {
            double M = opts_.M;
            if (M <= 0) {
                double biggest = prog_.lp.cost.size() > 0 ? prog_.lp.cost.cwiseAbs().maxCoeff() : 0;
                M = 1e6 * std::max(biggest, 1e-6);
            }
            soften(prog_, M);
        }
        return std::move(prog_);
    }

private:
    const Branch& branch_;
    const LtiSystem& sys_;
    const PredicateMap& pm_;
    const Vec& x0_;
    const Mat& past_;  // last row is z(k0)
    int k0_;
    AssembleOptions opts_;

    EncodePlan plan_;
    StackedModel stacked_;
    EncodedProgram prog_;
    int n_dec_ = 0;
    std::map<std::tuple<int, int, int>, int> w_index_;  // (member, side, t) -> w slot
    std::vector<Eigen::RowVectorXd> rows_;
    std::vector<double> rhs_;

    void validate_inputs() {
        if (x0_.size() != sys_.state_dim()) throw DimensionError("x0 dimension mismatch");
        for (const auto& mbr : branch_.members) {
            if (mbr.lhs.lits.empty() || (mbr.op == Formula::Kind::Until && mbr.rhs.lits.empty()))
                throw EncodeError("temporal member with an empty operand");
            for (const auto& lit : mbr.lhs.lits) check_pred(lit);
            for (const auto& lit : mbr.rhs.lits) check_pred(lit);
        }
        if (plan_.h > 0 && past_.rows() < plan_.h)
            throw EncodeError("past buffer holds " + std::to_string(past_.rows()) +
                              " steps, formula needs " + std::to_string(plan_.h));
        if (past_.rows() > 0 && past_.cols() != pm_.size())
            throw DimensionError("past buffer predicate count mismatch");
    }

    void check_pred(const Literal& lit) const {
        if (lit.pred < 1 || lit.pred > pm_.size())
            throw EncodeError("literal references unknown predicate p" + std::to_string(lit.pred));
    }

    bool needs_w(const Group& g, int t) const { return g.lits.size() > 1 && t > k0_; }

    void allocate_layout() {
        const int J = static_cast<int>(branch_.members.size());
        const int rows = static_cast<int>(plan_.eval_steps.size());
        prog_.n_ux = J >= 2 ? rows : 0;
        prog_.m_inputs = sys_.input_dim();
        prog_.n_inputs = sys_.input_dim() * opts_.N;
        prog_.k0 = k0_;
        prog_.h = plan_.h;
        prog_.k_l = plan_.k_l;
        prog_.k_h = plan_.k_h;
        prog_.n_blocks = plan_.n_blocks;
        prog_.horizon = opts_.N;

        // Reserve epigraph slots for every group value the cost touches.
        for (std::size_t j = 0; j < branch_.members.size(); ++j) {
            const auto& mbr = branch_.members[j];
            for (std::size_t r = 0; r < plan_.eval_steps.size(); ++r) {
                int kp = plan_.eval_steps[r];
                if (mbr.op == Formula::Kind::Until) {
                    int k1 = plan_.k1[j][r];
                    for (int t = kp; t <= k1; ++t) touch_w(static_cast<int>(j), 0, t, mbr.lhs);
                    touch_w(static_cast<int>(j), 1, k1, mbr.rhs);
                } else if (mbr.op == Formula::Kind::Eventually) {
                    touch_w(static_cast<int>(j), 0, plan_.k1[j][r], mbr.lhs);
                } else {
                    for (int t = kp + mbr.lo; t <= kp + mbr.hi; ++t)
                        touch_w(static_cast<int>(j), 0, t, mbr.lhs);
                }
            }
        }
        prog_.n_w = static_cast<int>(w_index_.size());
        n_dec_ = prog_.n_ux + prog_.n_w + prog_.n_inputs;
    }

    void touch_w(int j, int side, int t, const Group& g) {
        if (!needs_w(g, t)) return;
        auto key = std::make_tuple(j, side, t);
        if (!w_index_.count(key))
            w_index_[key] = static_cast<int>(w_index_.size());
    }

    double past_value(int t, int g) const {
        Eigen::Index row = past_.rows() - 1 - (k0_ - t);
        if (row < 0 || row >= past_.rows())
            throw EncodeError("past buffer does not reach back to step " + std::to_string(t));
        return past_(row, g - 1);
    }

    LinExpr literal_expr(int t, const Literal& lit) const {
        LinExpr e;
        e.coeffs = Vec::Zero(n_dec_);
        double sign = lit.negated ? -1.0 : 1.0;
        if (t <= k0_) {
            e.cst = sign * past_value(t, lit.pred);
            return e;
        }
        int ahead = t - k0_;
        int row = stacked_.row(ahead, lit.pred);
        e.cst = sign * (stacked_.H1.row(row).dot(x0_) + stacked_.offset(row));
        e.coeffs.segment(prog_.u_start(), prog_.n_inputs) =
            sign * stacked_.H2.row(row).transpose();
        return e;
    }

    LinExpr group_expr(int j, int side, int t, const Group& g) const {
        if (!needs_w(g, t)) {
            if (g.lits.size() == 1) return literal_expr(t, g.lits.front());
            // Recorded history: the conjunction value is a plain minimum.
            LinExpr e;
            e.coeffs = Vec::Zero(n_dec_);
            e.cst = kInf;
            for (const auto& lit : g.lits)
                e.cst = std::min(e.cst, (lit.negated ? -1.0 : 1.0) * past_value(t, lit.pred));
            return e;
        }
        LinExpr e;
        e.coeffs = Vec::Zero(n_dec_);
        e.coeffs(prog_.n_ux + w_index_.at(std::make_tuple(j, side, t))) = 1.0;
        return e;
    }

    LinExpr member_value(int j, std::size_t r) {
        const auto& mbr = branch_.members[static_cast<std::size_t>(j)];
        int kp = plan_.eval_steps[r];
        LinExpr v;
        v.coeffs = Vec::Zero(n_dec_);
        switch (mbr.op) {
            case Formula::Kind::Until: {
                int k1 = plan_.k1[static_cast<std::size_t>(j)][r];
                double w = 0.5 / static_cast<double>(k1 - kp + 1);
                for (int t = kp; t <= k1; ++t) add(v, group_expr(j, 0, t, mbr.lhs), w);
                add(v, group_expr(j, 1, k1, mbr.rhs), 0.5);
                break;
            }
            case Formula::Kind::Eventually:
                add(v, group_expr(j, 0, plan_.k1[static_cast<std::size_t>(j)][r], mbr.lhs), 1.0);
                break;
            case Formula::Kind::Always: {
                double w = 1.0 / static_cast<double>(mbr.hi - mbr.lo + 1);
                for (int t = kp + mbr.lo; t <= kp + mbr.hi; ++t)
                    add(v, group_expr(j, 0, t, mbr.lhs), w);
                break;
            }
            default:
                throw EncodeError("member_value: not a temporal member");
        }
        return v;
    }

    static void add(LinExpr& acc, const LinExpr& e, double scale) {
        acc.coeffs += scale * e.coeffs;
        acc.cst += scale * e.cst;
    }

    void build_cost() {
        prog_.lp.cost = Vec::Zero(n_dec_);
        const int J = static_cast<int>(branch_.members.size());
        if (J == 1) {
            for (std::size_t r = 0; r < plan_.eval_steps.size(); ++r) {
                LinExpr v = member_value(0, r);
                prog_.lp.cost += v.coeffs;
                prog_.cost_offset += v.cst;
            }
            return;
        }
        // Epigraph: maximize sum of u_x with u_x(r) below every member value.
        for (int r = 0; r < prog_.n_ux; ++r) prog_.lp.cost(r) = 1.0;
        for (std::size_t r = 0; r < plan_.eval_steps.size(); ++r)
            for (int j = 0; j < J; ++j) {
                LinExpr v = member_value(j, r);
                Eigen::RowVectorXd row = -v.coeffs.transpose();
                row(static_cast<Eigen::Index>(r)) += 1.0;
                rows_.push_back(row);
                rhs_.push_back(v.cst);
                RowTag tag;
                tag.kind = RowTag::Kind::Epigraph;
                tag.member = j;
                tag.e_row = static_cast<int>(r);
                prog_.tags.push_back(tag);
            }
        add_interior_bias();
    }

    void add_interior_bias() {
        if (opts_.interior_bias <= 0 || !opts_.one_time_k_event) return;
        for (std::size_t j = 0; j < branch_.members.size(); ++j) {
            const auto& mbr = branch_.members[j];
            if (mbr.op != Formula::Kind::Always) continue;
            int kp = plan_.eval_steps.front();
            double w = opts_.interior_bias / static_cast<double>(mbr.hi - mbr.lo + 1);
            for (int t = kp + mbr.lo; t <= kp + mbr.hi; ++t) {
                if (t <= k0_) continue;  // recorded history is not steerable
                LinExpr e = group_expr(static_cast<int>(j), 0, t, mbr.lhs);
                prog_.lp.cost += w * e.coeffs;
                prog_.cost_offset += w * e.cst;
            }
        }
    }

    void build_w_rows() {
        for (const auto& [key, slot] : w_index_) {
            auto [j, side, t] = key;
            const auto& mbr = branch_.members[static_cast<std::size_t>(j)];
            const Group& g = side == 0 ? mbr.lhs : mbr.rhs;
            for (const auto& lit : g.lits) {
                LinExpr z = literal_expr(t, lit);
                Eigen::RowVectorXd row = -z.coeffs.transpose();
                row(static_cast<Eigen::Index>(prog_.n_ux + slot)) += 1.0;
                rows_.push_back(row);
                rhs_.push_back(z.cst);
                RowTag tag;
                tag.kind = RowTag::Kind::GroupValue;
                tag.member = j;
                tag.t = t;
                tag.lit = lit;
                prog_.tags.push_back(tag);
            }
        }
    }

    void build_hard_rows() {
        std::set<std::pair<int, Literal>> seen;
        for (std::size_t j = 0; j < branch_.members.size(); ++j) {
            K1Map k1map = [&](int kp) {
                for (std::size_t r = 0; r < plan_.eval_steps.size(); ++r)
                    if (plan_.eval_steps[r] == kp) return plan_.k1[j][r];
                throw Error("assemble: k1 requested off the evaluation grid");
            };
            for (const auto& req :
                 hard_requirements(branch_.members[j], plan_.eval_steps, k1map)) {
                if (!seen.insert({req.t, req.lit}).second) continue;
                LinExpr z = literal_expr(req.t, req.lit);
                rows_.push_back(-z.coeffs.transpose());
                rhs_.push_back(z.cst - (req.t > k0_ ? opts_.hard_margin : 0.0));
                RowTag tag;
                tag.kind = RowTag::Kind::Hard;
                tag.member = static_cast<int>(j);
                tag.t = req.t;
                tag.lit = req.lit;
                prog_.tags.push_back(tag);
            }
        }
    }

    void pack() {
        const int n_rows = static_cast<int>(rows_.size());
        prog_.lp.A.resize(n_rows, n_dec_);
        prog_.lp.b.resize(n_rows);
        for (int r = 0; r < n_rows; ++r) {
            prog_.lp.A.row(r) = rows_[static_cast<std::size_t>(r)];
            prog_.lp.b(r) = rhs_[static_cast<std::size_t>(r)];
        }
        prog_.lp.lower = Vec::Constant(n_dec_, -kInf);
        prog_.lp.upper = Vec::Constant(n_dec_, kInf);
        for (int s = 0; s < opts_.N; ++s)
            for (int c = 0; c < sys_.input_dim(); ++c) {
                int col = prog_.u_start() + s * sys_.input_dim() + c;
                prog_.lp.lower(col) = sys_.u_min(c);
                prog_.lp.upper(col) = sys_.u_max(c);
            }
    }
};

}  // namespace detail

// Assembles the full program for one branch at step k0.  `past` carries the
// recorded predicate vectors with its last row equal to z(k0); the formula
// length determines how far back it must reach.
inline EncodedProgram assemble(const Branch& branch, const LtiSystem& sys, const PredicateMap& pm,
                               const Vec& x0, const Mat& past, int k0,
                               const AssembleOptions& opts) {
    detail::Assembler a(branch, sys, pm, x0, past, k0, opts);
    return a.run();
}

}  // namespace stlmpc
