#include "stlmpc/formula.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace stlmpc;
using K = Formula::Kind;

TEST_CASE("parse: eventually over a predicate conjunction") {
    Specification s = parse_formula("F[5,25] (p1 & p2)");
    REQUIRE(s.body.kind == K::Eventually);
    CHECK(s.body.lo == 5);
    CHECK(s.body.hi == 25);
    REQUIRE(s.body.children[0].kind == K::And);
    CHECK(s.body.children[0].children[0] == Formula::predicate(1));
    CHECK(s.body.children[0].children[1] == Formula::predicate(2));
}

TEST_CASE("parse: always") {
    Specification s = parse_formula("G[0,25] p1");
    CHECK(s.body == Formula::always(Formula::predicate(1), 0, 25));
}

TEST_CASE("parse: until with negated rhs") {
    Specification s = parse_formula("p1 U[2,4] !p2");
    CHECK(s.body == Formula::until(Formula::predicate(1), Formula::predicate(2, true), 2, 4));
}

TEST_CASE("parse: seconds convert exactly or fail") {
    ParseOptions po;
    po.units = IntervalUnits::Seconds;
    po.dt = 0.5;
    Formula f = parse_formula_body("F[5,25] p1", po);
    CHECK(f.lo == 10);
    CHECK(f.hi == 50);

    po.dt = 0.4;  // 5 / 0.4 = 12.5 steps
    CHECK_THROWS_AS(parse_formula_body("F[5,25] p1", po), ParseError);
}

TEST_CASE("parse errors carry a position") {
    try {
        parse_formula_body("p1 & q2");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.position == 5);
    }
    CHECK_THROWS_AS(parse_formula_body("F[4,2] p1"), ParseError);   // a > b
    CHECK_THROWS_AS(parse_formula_body("!(p1 & p2)"), ParseError);  // negation on non-atom
    CHECK_THROWS_AS(parse_formula_body("F[1,2] p1 p2"), ParseError);
    CHECK_THROWS_AS(parse_formula_body(""), ParseError);
}

TEST_CASE("formula_length recursion") {
    CHECK(formula_length(Formula::predicate(1)) == 0);
    CHECK(formula_length(Formula::eventually(Formula::predicate(1), 5, 25)) == 25);
    // b + max over operands, by hand: 4 + max(0, 3)
    Formula f = Formula::until(Formula::predicate(1),
                               Formula::eventually(Formula::predicate(2), 0, 3), 2, 4);
    CHECK(formula_length(f) == 7);
    CHECK(formula_length(parse_formula_body("p1 & G[0,6] p2")) == 6);
}

TEST_CASE("classify the fragment") {
    CHECK(classify(parse_formula_body("G[0,25] p1")) == FragmentClass::Psi3);
    CHECK(classify(parse_formula_body("p1 U[0,3] p2")) == FragmentClass::Psi1);
    CHECK(classify(parse_formula_body("F[0,3] p1")) == FragmentClass::Psi2);
    CHECK(classify(parse_formula_body("F[0,3] p1 & G[0,2] p2")) == FragmentClass::Psi4);
    CHECK(classify(parse_formula_body("F[0,3] p1 | G[0,2] p2")) == FragmentClass::Psi5);
    CHECK(classify(parse_formula_body("F[0,3] p1 & G[0,2] p2 | p1 U[1,2] p2")) ==
          FragmentClass::Psi6);
    // Nested temporal operators fall outside the fragment.
    CHECK(classify(parse_formula_body("F[0,5] G[0,2] p1")) == FragmentClass::Unsupported);
    CHECK(classify(parse_formula_body("p1 U[0,2] (F[0,1] p2)")) == FragmentClass::Unsupported);
    CHECK(classify(parse_formula_body("p1 & p2")) == FragmentClass::Unsupported);
}

namespace {

// Random formulas inside the grammar (so printing stays parseable).
Formula random_pred_level(std::mt19937& rng, int depth) {
    std::uniform_int_distribution<int> pred(1, 4), pick(0, 2), fan(2, 3);
    if (depth <= 0 || pick(rng) == 0)
        return Formula::predicate(pred(rng), pick(rng) == 1);
    std::vector<Formula> kids;
    int n = fan(rng);
    for (int i = 0; i < n; ++i) kids.push_back(random_pred_level(rng, depth - 1));
    return pick(rng) == 1 ? Formula::conj(std::move(kids)) : Formula::disj(std::move(kids));
}

Formula random_member(std::mt19937& rng) {
    std::uniform_int_distribution<int> lo(0, 3), span(0, 4), shape(0, 2), pred(1, 4);
    int a = lo(rng), b = a + span(rng);
    switch (shape(rng)) {
        case 0:
            return Formula::until(Formula::predicate(pred(rng)), random_pred_level(rng, 1), a, b);
        case 1:
            return Formula::eventually(random_pred_level(rng, 2), a, b);
        default:
            return Formula::always(random_pred_level(rng, 2), a, b);
    }
}

Formula random_body(std::mt19937& rng) {
    std::uniform_int_distribution<int> fan(1, 3), pick(0, 1);
    int n = fan(rng);
    if (n == 1) return random_member(rng);
    std::vector<Formula> kids;
    for (int i = 0; i < n; ++i) kids.push_back(random_member(rng));
    return pick(rng) ? Formula::conj(std::move(kids)) : Formula::disj(std::move(kids));
}

}  // namespace

TEST_CASE("property: print then parse is the identity") {
    std::mt19937 rng(7);
    for (int i = 0; i < 500; ++i) {
        Formula f = random_body(rng);
        std::string text = to_string(f);
        INFO(text);
        Formula g = parse_formula_body(text);
        CHECK(f == g);
    }
}

TEST_CASE("property: lengthening an interval never shrinks the length") {
    std::mt19937 rng(11);
    for (int i = 0; i < 300; ++i) {
        Formula f = random_body(rng);
        int before = formula_length(f);
        // bump the first temporal node's upper bound
        Formula* node = &f;
        while (node->kind == K::And || node->kind == K::Or) node = &node->children[0];
        node->hi += 3;
        CHECK(formula_length(f) >= before);
    }
}

TEST_CASE("property: classify rejects every nested-temporal formula") {
    std::mt19937 rng(13);
    for (int i = 0; i < 200; ++i) {
        Formula inner = random_member(rng);
        Formula nested = Formula::eventually(inner, 0, 2);
        CHECK(classify(nested) == FragmentClass::Unsupported);
        Formula wrapped = Formula::conj({random_member(rng), nested});
        CHECK(classify(wrapped) == FragmentClass::Unsupported);
    }
}

TEST_CASE("validate_against checks predicate indices") {
    PredicateMap pm;
    pm.C = Mat::Identity(2, 2);
    pm.c = Vec::Zero(2);
    CHECK_NOTHROW(validate_against(parse_formula_body("F[0,1] (p1 & p2)"), pm));
    CHECK_THROWS_AS(validate_against(parse_formula_body("F[0,1] p3"), pm), ScenarioError);
}
