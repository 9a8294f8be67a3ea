// stlmpc/formula.hpp — temporal-logic fragment: AST, parser, measures
//
// The fragment handled here:
//
//   literal      p3, !p3                      (negation on atoms only, PNF)
//   boolean      a & b, a | b                 (over literals or operators)
//   temporal     F[a,b] f, G[a,b] f, p U[a,b] rhs
//
// Intervals are closed integer step ranges 0 <= a <= b.  A formula may be
// written with bounds in seconds; the parser converts them to steps using
// the sampling period and insists on exact divisibility.
//
// Atoms are 1-based references into a PredicateMap, which keeps the affine
// map z = C x + c in one place.  A Specification wraps a formula with its
// satisfaction mode: AllTime (imposed at every step) or OneTime (triggered
// once by an event at a known step).

#pragma once

#include "stlmpc/common.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace stlmpc {

// ── PredicateMap ────────────────────────────────────────────────────────────
// Row g of C and entry g of c define predicate g+1: true iff (Cx + c)(g) >= 0.

struct PredicateMap {
    Mat C;
    Vec c;
    std::vector<std::string> labels;  // optional, cosmetic

    int size() const { return static_cast<int>(C.rows()); }
    int state_dim() const { return static_cast<int>(C.cols()); }

    void validate() const {
        if (C.rows() < 1) throw DimensionError("PredicateMap: need at least one predicate");
        if (C.rows() != c.size())
            throw DimensionError("PredicateMap: C has " + std::to_string(C.rows()) +
                                 " rows but c has " + std::to_string(c.size()) + " entries");
        if (!labels.empty() && static_cast<int>(labels.size()) != size())
            throw DimensionError("PredicateMap: label count does not match predicate count");
    }

    std::string label(int pred) const {  // 1-based
        if (!labels.empty()) return labels[static_cast<std::size_t>(pred - 1)];
        return "p" + std::to_string(pred);
    }
};

// ── Formula ─────────────────────────────────────────────────────────────────

struct Formula {
    enum class Kind { Predicate, And, Or, Until, Eventually, Always };

    Kind kind = Kind::Predicate;
    int pred = 1;          // Predicate: 1-based index into the PredicateMap
    bool negated = false;  // Predicate only (PNF)
    int lo = 0, hi = 0;    // temporal interval [lo, hi] in steps
    std::vector<Formula> children;  // And/Or: >=2, Until: {lhs, rhs}, F/G: {child}

    static Formula predicate(int index, bool neg = false) {
        Formula f;
        f.kind = Kind::Predicate;
        f.pred = index;
        f.negated = neg;
        return f;
    }
    static Formula conj(std::vector<Formula> kids) {
        Formula f;
        f.kind = Kind::And;
        f.children = std::move(kids);
        return f;
    }
    static Formula disj(std::vector<Formula> kids) {
        Formula f;
        f.kind = Kind::Or;
        f.children = std::move(kids);
        return f;
    }
    static Formula until(Formula lhs, Formula rhs, int a, int b) {
        Formula f;
        f.kind = Kind::Until;
        f.lo = a;
        f.hi = b;
        f.children = {std::move(lhs), std::move(rhs)};
        return f;
    }
    static Formula eventually(Formula child, int a, int b) {
        Formula f;
        f.kind = Kind::Eventually;
        f.lo = a;
        f.hi = b;
        f.children = {std::move(child)};
        return f;
    }
    static Formula always(Formula child, int a, int b) {
        Formula f;
        f.kind = Kind::Always;
        f.lo = a;
        f.hi = b;
        f.children = {std::move(child)};
        return f;
    }

    bool operator==(const Formula& o) const {
        if (kind != o.kind) return false;
        if (kind == Kind::Predicate) return pred == o.pred && negated == o.negated;
        if (lo != o.lo || hi != o.hi) return false;
        return children == o.children;
    }
};

enum class SpecMode { AllTime, OneTime };

struct Specification {
    SpecMode mode = SpecMode::AllTime;
    int event_step = 0;  // OneTime: step at which the event triggers
    Formula body;
};

// ── Formula length ──────────────────────────────────────────────────────────
// Steps of future signal needed beyond the evaluation instant.

inline int formula_length(const Formula& f) {
    switch (f.kind) {
        case Formula::Kind::Predicate:
            return 0;
        case Formula::Kind::And:
        case Formula::Kind::Or: {
            int h = 0;
            for (const auto& c : f.children) h = std::max(h, formula_length(c));
            return h;
        }
        case Formula::Kind::Until:
            return f.hi + std::max(formula_length(f.children[0]), formula_length(f.children[1]));
        case Formula::Kind::Eventually:
        case Formula::Kind::Always:
            return f.hi + formula_length(f.children[0]);
    }
    throw Error("formula_length: bad kind");
}

// ── Fragment classification ────────────────────────────────────────────────

enum class FragmentClass { Psi1, Psi2, Psi3, Psi4, Psi5, Psi6, Unsupported };

inline bool is_predicate_level(const Formula& f) {
    if (f.kind == Formula::Kind::Predicate) return true;
    if (f.kind == Formula::Kind::And || f.kind == Formula::Kind::Or)
        return std::all_of(f.children.begin(), f.children.end(), is_predicate_level);
    return false;
}

// A single temporal operator whose operand(s) contain no further temporal
// operator.  These are the building blocks the encoder accepts.
inline bool is_temporal_member(const Formula& f) {
    switch (f.kind) {
        case Formula::Kind::Until:
            return is_predicate_level(f.children[0]) && is_predicate_level(f.children[1]);
        case Formula::Kind::Eventually:
        case Formula::Kind::Always:
            return is_predicate_level(f.children[0]);
        default:
            return false;
    }
}

namespace detail {
inline bool is_member_combination(const Formula& f, bool& saw_and, bool& saw_or) {
    if (is_temporal_member(f)) return true;
    if (f.kind == Formula::Kind::And || f.kind == Formula::Kind::Or) {
        (f.kind == Formula::Kind::And ? saw_and : saw_or) = true;
        for (const auto& c : f.children)
            if (!is_member_combination(c, saw_and, saw_or)) return false;
        return true;
    }
    return false;
}
}  // namespace detail

inline FragmentClass classify(const Formula& body) {
    if (is_temporal_member(body)) {
        switch (body.kind) {
            case Formula::Kind::Until: return FragmentClass::Psi1;
            case Formula::Kind::Eventually: return FragmentClass::Psi2;
            default: return FragmentClass::Psi3;
        }
    }
    bool saw_and = false, saw_or = false;
    if (detail::is_member_combination(body, saw_and, saw_or)) {
        if (saw_and && saw_or) return FragmentClass::Psi6;
        if (saw_or) return FragmentClass::Psi5;
        return FragmentClass::Psi4;
    }
    return FragmentClass::Unsupported;
}

inline FragmentClass classify(const Specification& s) { return classify(s.body); }

// ── Parser ──────────────────────────────────────────────────────────────────
//
//   formula := disj
//   disj    := conj ("|" conj)*
//   conj    := unary ("&" unary)*
//   unary   := "!" atom
//            | "F[" int "," int "]" unary
//            | "G[" int "," int "]" unary
//            | atom ("U[" int "," int "]" until_rhs)?
//            | "(" formula ")"
//   until_rhs := "!"? atom | "(" formula ")"
//   atom    := "p" int

enum class IntervalUnits { Steps, Seconds };

struct ParseOptions {
    IntervalUnits units = IntervalUnits::Steps;
    double dt = 1.0;  // sampling period, used only for Seconds
    SpecMode mode = SpecMode::AllTime;
    int event_step = 0;
};

namespace detail {

class FormulaParser {
public:
    FormulaParser(const std::string& text, const ParseOptions& opts) : src_(text), opts_(opts) {}

    Formula parse() {
        Formula f = disj();
        skip_ws();
        if (pos_ != src_.size()) fail("unexpected trailing input");
        return f;
    }

private:
    const std::string& src_;
    ParseOptions opts_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_); }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }
    bool peek(char c) {
        skip_ws();
        return pos_ < src_.size() && src_[pos_] == c;
    }
    bool accept(char c) {
        if (!peek(c)) return false;
        ++pos_;
        return true;
    }
    void expect(char c, const char* what) {
        if (!accept(c)) fail(std::string("expected '") + c + "' " + what);
    }

    long read_int() {
        skip_ws();
        std::size_t start = pos_;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        if (pos_ == start) fail("expected an integer");
        return std::stol(src_.substr(start, pos_ - start));
    }

    int to_steps(long v) const {
        if (opts_.units == IntervalUnits::Steps) return static_cast<int>(v);
        double s = static_cast<double>(v) / opts_.dt;
        double r = std::round(s);
        if (std::abs(s - r) > 1e-9 * std::max(1.0, std::abs(s)))
            throw ParseError(std::to_string(v) + " s is not a whole number of steps at dt=" +
                                 std::to_string(opts_.dt),
                             pos_);
        return static_cast<int>(r);
    }

    std::pair<int, int> interval() {
        expect('[', "to open an interval");
        long a = read_int();
        expect(',', "between interval bounds");
        long b = read_int();
        if (a > b) fail("interval with a > b");
        expect(']', "to close an interval");
        return {to_steps(a), to_steps(b)};
    }

    Formula atom() {
        skip_ws();
        if (pos_ >= src_.size() || src_[pos_] != 'p') fail("expected a predicate atom 'p<n>'");
        ++pos_;
        long idx = read_int();
        if (idx < 1) fail("predicate indices are 1-based");
        return Formula::predicate(static_cast<int>(idx));
    }

    Formula until_rhs() {
        if (accept('!')) {
            Formula a = atom();
            a.negated = true;
            return a;
        }
        if (accept('(')) {
            Formula f = disj();
            expect(')', "to close a group");
            return f;
        }
        return atom();
    }

    Formula unary() {
        skip_ws();
        if (accept('!')) {
            skip_ws();
            if (pos_ >= src_.size() || src_[pos_] != 'p')
                fail("negation applied to a non-predicate");
            Formula a = atom();
            a.negated = true;
            return a;
        }
        if (peek('F') || peek('G')) {
            char op = src_[pos_++];
            auto [a, b] = interval();
            Formula child = unary();
            return op == 'F' ? Formula::eventually(std::move(child), a, b)
                             : Formula::always(std::move(child), a, b);
        }
        if (accept('(')) {
            Formula f = disj();
            expect(')', "to close a group");
            return f;
        }
        Formula lhs = atom();
        skip_ws();
        if (peek('U')) {
            ++pos_;
            auto [a, b] = interval();
            Formula rhs = until_rhs();
            return Formula::until(std::move(lhs), std::move(rhs), a, b);
        }
        return lhs;
    }

    Formula conj() {
        std::vector<Formula> kids;
        kids.push_back(unary());
        while (accept('&')) kids.push_back(unary());
        if (kids.size() == 1) return std::move(kids.front());
        return Formula::conj(std::move(kids));
    }

    Formula disj() {
        std::vector<Formula> kids;
        kids.push_back(conj());
        while (accept('|')) kids.push_back(conj());
        if (kids.size() == 1) return std::move(kids.front());
        return Formula::disj(std::move(kids));
    }
};

}  // namespace detail

inline Formula parse_formula_body(const std::string& text, const ParseOptions& opts = {}) {
    return detail::FormulaParser(text, opts).parse();
}

inline Specification parse_formula(const std::string& text, const ParseOptions& opts = {}) {
    Specification s;
    s.mode = opts.mode;
    s.event_step = opts.event_step;
    s.body = parse_formula_body(text, opts);
    return s;
}

// Checks that every atom refers to an existing predicate row.
inline void validate_against(const Formula& f, const PredicateMap& pm) {
    if (f.kind == Formula::Kind::Predicate) {
        if (f.pred < 1 || f.pred > pm.size())
            throw ScenarioError("formula references predicate p" + std::to_string(f.pred) +
                                " but the map has " + std::to_string(pm.size()));
        return;
    }
    for (const auto& c : f.children) validate_against(c, pm);
}

// ── Printer ─────────────────────────────────────────────────────────────────
// Canonical text that reparses to the same AST (for grammar-expressible trees).

namespace detail {

inline std::string print(const Formula& f);

inline std::string print_operand(const Formula& f) {
    if (f.kind == Formula::Kind::Predicate) return print(f);
    return "(" + print(f) + ")";
}

inline std::string print(const Formula& f) {
    using K = Formula::Kind;
    switch (f.kind) {
        case K::Predicate:
            return (f.negated ? "!p" : "p") + std::to_string(f.pred);
        case K::And:
        case K::Or: {
            const char* sep = f.kind == K::And ? " & " : " | ";
            std::string out;
            for (std::size_t i = 0; i < f.children.size(); ++i) {
                const Formula& c = f.children[i];
                bool parens = c.kind == K::Or || (f.kind == K::And && c.kind == K::And);
                if (i) out += sep;
                out += parens ? "(" + print(c) + ")" : print(c);
            }
            return out;
        }
        case K::Until:
            return print(f.children[0]) + " U[" + std::to_string(f.lo) + "," +
                   std::to_string(f.hi) + "] " + print_operand(f.children[1]);
        case K::Eventually:
        case K::Always:
            return std::string(f.kind == K::Eventually ? "F[" : "G[") + std::to_string(f.lo) +
                   "," + std::to_string(f.hi) + "] " + print_operand(f.children[0]);
    }
    throw Error("print: bad kind");
}

}  // namespace detail

inline std::string to_string(const Formula& f) { return detail::print(f); }

}  // namespace stlmpc
