#include "stlmpc/encoder.hpp"

#include "encoder_oracle.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace stlmpc;
using Catch::Approx;

namespace {

LtiSystem scalar_system(double a, double b) {
    LtiSystem s;
    s.A = Mat::Constant(1, 1, a);
    s.B = Mat::Constant(1, 1, b);
    s.u_min = Vec::Constant(1, -1);
    s.u_max = Vec::Constant(1, 1);
    return s;
}

PredicateMap identity_preds(int n) {
    PredicateMap pm;
    pm.C = Mat::Identity(n, n);
    pm.c = Vec::Zero(n);
    return pm;
}

Mat casestudy_A() {
    Mat A(4, 4);
    A << 1, 0.5, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0.5, 0, 0, 0, 1;
    return A;
}

Mat casestudy_B() {
    Mat B(4, 2);
    B << 0.125, 0, 0.5, 0, 0, 0.125, 0, 0.5;
    return B;
}

}  // namespace

TEST_CASE("build_stacked: identity dynamics") {
    LtiSystem sys;
    sys.A = Mat::Identity(2, 2);
    sys.B = Mat::Identity(2, 2);
    sys.u_min = Vec::Constant(2, -1);
    sys.u_max = Vec::Constant(2, 1);
    StackedModel sm = build_stacked(sys, identity_preds(2), 2);
    Mat H1(4, 2), H2(4, 4);
    H1 << 1, 0, 0, 1, 1, 0, 0, 1;
    H2 << 1, 0, 0, 0, 0, 1, 0, 0, 1, 0, 1, 0, 0, 1, 0, 1;
    CHECK(sm.H1.isApprox(H1));
    CHECK(sm.H2.isApprox(H2));
}

TEST_CASE("build_stacked: scalar chain") {
    StackedModel sm = build_stacked(scalar_system(2, 1), identity_preds(1), 3);
    Vec H1(3);
    H1 << 2, 4, 8;
    Mat H2(3, 3);
    H2 << 1, 0, 0, 2, 1, 0, 4, 2, 1;
    CHECK(sm.H1.isApprox(H1));
    CHECK(sm.H2.isApprox(H2));
}

TEST_CASE("build_stacked: planar double integrator at N = 1") {
    LtiSystem sys;
    sys.A = casestudy_A();
    sys.B = casestudy_B();
    sys.dt = 0.5;
    sys.u_min = Vec::Constant(2, -1);
    sys.u_max = Vec::Constant(2, 1);
    StackedModel sm = build_stacked(sys, identity_preds(4), 1);
    CHECK(sm.H1.isApprox(sys.A));
    CHECK(sm.H2.isApprox(sys.B));
}

TEST_CASE("property: stacked map equals step recursion") {
    std::mt19937 rng(21);
    for (int i = 0; i < 100; ++i) {
        auto inst = oracle::random_encoder_instance(rng);
        StackedModel sm = build_stacked(inst.sys, inst.pm, inst.N);
        Vec z_st = sm.H1 * inst.x0 + sm.H2 * inst.u_st + sm.offset;
        Vec x = inst.x0;
        const int m = inst.sys.input_dim(), G = inst.pm.size();
        for (int k = 0; k < inst.N; ++k) {
            x = inst.sys.step(x, inst.u_st.segment(m * k, m));
            Vec z = eval_predicates(inst.pm, x);
            CHECK((z - z_st.segment(G * k, G)).cwiseAbs().maxCoeff() < 1e-9);
        }
    }
}

TEST_CASE("build_E_until reproduces the worked fixture") {
    std::map<int, int> table{{-1, 0}, {0, 0}, {1, 2}, {2, 2}};
    EMatrix e = build_E_until(4, [&](int kp) { return table.at(kp); }, 2);
    Mat expected(4, 8);
    expected << 0.5, 0, 0.5, 1, 0, 0, 0, 0,
                0, 0, 1, 1, 0, 0, 0, 0,
                0, 0, 0, 0, 0.5, 0, 0.5, 1,
                0, 0, 0, 0, 0, 0, 1, 1;
    expected *= 0.5;
    REQUIRE(e.coeffs.rows() == 4);
    REQUIRE(e.coeffs.cols() == 8);
    CHECK((e.coeffs - expected).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(e.k_lo == -1);
}

TEST_CASE("build_E_until: single row collapses the average") {
    EMatrix e = build_E_until(1, [](int kp) { return kp; }, 0);
    REQUIRE(e.coeffs.rows() == 1);
    REQUIRE(e.coeffs.cols() == 2);
    CHECK(e.coeffs(0, 0) == Approx(0.5));
    CHECK(e.coeffs(0, 1) == Approx(0.5));
}

TEST_CASE("build_E_eventually: immediate selection gives the identity") {
    EMatrix e3 = build_E_eventually(3, [](int kp) { return kp; }, 1);
    CHECK(e3.coeffs.isApprox(Mat::Identity(3, 3)));
    EMatrix e2 = build_E_eventually(2, [](int kp) { return kp; }, 0);
    CHECK(e2.coeffs.isApprox(Mat::Identity(2, 2)));
    // out-of-span witness steps are an error
    CHECK_THROWS_AS(build_E_eventually(3, [](int kp) { return kp + 1; }, 1), EncodeError);
}

TEST_CASE("build_E_always window placement") {
    EMatrix e = build_E_always(3, 0, 1);
    Mat expected(3, 3);
    expected << 0.5, 0.5, 0, 0, 0.5, 0.5, 0, 0.5, 0.5;
    CHECK(e.coeffs.isApprox(expected));

    EMatrix point = build_E_always(3, 1, 1);
    for (int i = 0; i < 3; ++i) CHECK(point.coeffs.row(i).sum() == Approx(1.0));
    CHECK(point.coeffs(0, 1) == Approx(1.0));

    // the whole-horizon window is the same averaging row for every step
    EMatrix wide = build_E_always(4, 0, 3);
    for (int i = 0; i < 4; ++i)
        for (int c = 0; c < 4; ++c) CHECK(wide.coeffs(i, c) == Approx(0.25));

    CHECK_THROWS_AS(build_E_always(3, 0, 3), EncodeError);
}

TEST_CASE("property: rows of every builder are nonnegative and sum to one") {
    std::mt19937 rng(31);
    std::uniform_int_distribution<int> Ndist(1, 8), lodist(0, 2), span(0, 3);
    for (int i = 0; i < 200; ++i) {
        int N = Ndist(rng);
        int a = lodist(rng), b = a + span(rng);
        int h = b;
        int n_blocks = N + h;
        EMatrix eu = build_E_until(N, [&](int kp) { return kp + b; }, h, 0, n_blocks);
        EMatrix ef = build_E_eventually(N, [&](int kp) { return kp + b; }, h, 0, n_blocks);
        if (b - a + 1 <= N) {
            EMatrix eg = build_E_always(N, a, b);
            for (int r = 0; r < N; ++r) {
                CHECK(eg.coeffs.row(r).minCoeff() >= 0);
                CHECK(eg.coeffs.row(r).sum() == Approx(1.0));
            }
        }
        for (int r = 0; r < N; ++r) {
            CHECK(eu.coeffs.row(r).minCoeff() >= 0);
            CHECK(eu.coeffs.row(r).sum() == Approx(1.0));
            CHECK(ef.coeffs.row(r).minCoeff() >= 0);
            CHECK(ef.coeffs.row(r).sum() == Approx(1.0));
        }
    }
}

TEST_CASE("pad_for_conjunction interleaves member columns") {
    EMatrix e = build_E_eventually(2, [](int kp) { return kp; }, 0);  // I2
    EMatrix first = pad_for_conjunction(e, 0, {1, 1});
    EMatrix second = pad_for_conjunction(e, 1, {1, 1});
    // member 1: column j -> 2j-1 (1-based); member 2: column j -> 2j
    Mat f(2, 4), s(2, 4);
    f << 1, 0, 0, 0, 0, 0, 1, 0;
    s << 0, 1, 0, 0, 0, 0, 0, 1;
    CHECK(first.coeffs.isApprox(f));
    CHECK(second.coeffs.isApprox(s));
    // single member: identity padding
    EMatrix alone = pad_for_conjunction(e, 0, {1});
    CHECK(alone.coeffs.isApprox(e.coeffs));
    // padding only inserts zeros
    for (int r = 0; r < 2; ++r) CHECK(first.coeffs.row(r).sum() == Approx(e.coeffs.row(r).sum()));
}

TEST_CASE("build_QR layout") {
    EMatrix e = build_E_eventually(2, [](int kp) { return kp; }, 0);
    auto p1 = pad_for_conjunction(e, 0, {1, 1});
    auto p2 = pad_for_conjunction(e, 1, {1, 1});
    auto [Q, R] = build_QR({p1, p2}, 3);
    Mat Qexp(4, 5);
    Qexp << 1, 0, 0, 0, 0,
            1, 0, 0, 0, 0,
            0, 1, 0, 0, 0,
            0, 1, 0, 0, 0;
    CHECK(Q.isApprox(Qexp));
    CHECK(R.row(0).isApprox(p1.coeffs.row(0)));
    CHECK(R.row(1).isApprox(p2.coeffs.row(0)));
    CHECK(R.row(2).isApprox(p1.coeffs.row(1)));
    CHECK(R.row(3).isApprox(p2.coeffs.row(1)));

    auto [Q1, R1] = build_QR({p1}, 0);
    CHECK(Q1.rows() == 2);  // single member: u_x,i <= (E z)_i rows only
    auto [Q3, R3] = build_QR({p1, p1, p1}, 0);
    CHECK(Q3.rows() == 6);
}

TEST_CASE("build_H2man prepends a zero block") {
    Mat H2(1, 1);
    H2 << 0.7;  // C B for scalar everything
    Mat man = build_H2man(H2, 1);
    REQUIRE(man.rows() == 1);
    REQUIRE(man.cols() == 2);
    CHECK(man(0, 0) == 0.0);
    CHECK(man(0, 1) == Approx(0.7));

    Mat big = Mat::Random(6, 4);
    Mat man2 = build_H2man(big, 3);
    CHECK(man2.cols() == 3 + 4);
    CHECK(man2.leftCols(3).isZero());
    CHECK(man2.rightCols(4).isApprox(big));
}

TEST_CASE("hard_requirements per operator") {
    TemporalMember g;
    g.op = Formula::Kind::Always;
    g.lo = 0;
    g.hi = 1;
    g.lhs.lits = {Literal{1, false}};
    auto rows = hard_requirements(g, {5}, [](int) { return 0; });
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].t == 5);
    CHECK(rows[1].t == 6);

    TemporalMember f;
    f.op = Formula::Kind::Eventually;
    f.lo = 1;
    f.hi = 2;
    f.lhs.lits = {Literal{1, false}};
    rows = hard_requirements(f, {3}, [](int kp) { return kp + 2; });
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].t == 5);

    TemporalMember u;
    u.op = Formula::Kind::Until;
    u.lo = 0;
    u.hi = 2;
    u.lhs.lits = {Literal{1, false}};
    u.rhs.lits = {Literal{2, false}};
    rows = hard_requirements(u, {0}, [](int kp) { return kp + 2; });
    REQUIRE(rows.size() == 4);  // lhs at 0,1,2 plus rhs at 2
}

TEST_CASE("select_one_time_row picks by elapsed time") {
    EMatrix e = build_E_eventually(4, [](int kp) { return kp + 2; }, 2, 0, 6);
    EMatrix full = select_one_time_row(e, 2, 0);
    CHECK(full.coeffs.isApprox(e.coeffs.row(2 - 1)));  // row h
    EMatrix last = select_one_time_row(e, 2, 1);
    CHECK(last.coeffs.isApprox(e.coeffs.row(0)));  // row 1
    CHECK_THROWS_AS(select_one_time_row(e, 2, 2), EncodeError);
}

TEST_CASE("expand_branches enumerates disjunction choices") {
    // member-level disjunction
    auto b1 = expand_branches(parse_formula_body("F[0,1] p1 | G[0,1] p2"));
    CHECK(b1.size() == 2);
    // predicate-level disjunction inside an operand
    auto b2 = expand_branches(parse_formula_body("F[0,1] (p1 | p2)"));
    CHECK(b2.size() == 2);
    // cross product across members
    auto b3 = expand_branches(parse_formula_body("F[0,1] (p1 | p2) & G[0,1] (p3 | p4)"));
    CHECK(b3.size() == 4);
    // conjunction operands stay in one branch
    auto b4 = expand_branches(parse_formula_body("F[0,1] (p1 & p2)"));
    REQUIRE(b4.size() == 1);
    CHECK(b4[0].members[0].lhs.lits.size() == 2);
    // source positions survive expansion
    auto b5 = expand_branches(parse_formula_body("F[0,1] p1 & (G[0,1] p2 | G[0,2] p3)"));
    REQUIRE(b5.size() == 2);
    CHECK(b5[0].members[0].source_index == 0);
    CHECK(b5[0].members[1].source_index == 1);
    CHECK(b5[1].members[1].source_index == 2);
}

TEST_CASE("assemble: conjunction of two always-members has the epigraph layout") {
    LtiSystem sys = scalar_system(1, 1);
    PredicateMap pm = identity_preds(1);
    Formula body = Formula::conj({Formula::always(Formula::predicate(1), 0, 1),
                                  Formula::always(Formula::predicate(1), 0, 2)});
    auto branch = expand_branches(body).front();
    const int N = 4;
    AssembleOptions opts;
    opts.N = N;
    Mat past(2, 1);
    past << 1, 1;
    Vec x0 = Vec::Ones(1);
    EncodedProgram p = assemble(branch, sys, pm, x0, past, 0, opts);
    CHECK(p.n_ux == N);
    CHECK(p.n_w == 0);
    CHECK(p.n_inputs == N);
    CHECK(p.lp.num_vars() == N + N);  // u_x block then inputs
    for (int i = 0; i < N; ++i) CHECK(p.lp.cost(i) == 1.0);
    for (int i = N; i < 2 * N; ++i) CHECK(p.lp.cost(i) == 0.0);
}

TEST_CASE("assemble: violated history makes the program infeasible") {
    LtiSystem sys = scalar_system(1, 1);
    PredicateMap pm = identity_preds(1);
    Formula body = Formula::always(Formula::predicate(1), 0, 1);
    auto branch = expand_branches(body).front();
    AssembleOptions opts;
    opts.N = 2;
    Mat past(2, 1);
    past << -3, -3;  // recorded violation
    Vec x0 = Vec::Constant(1, -3);
    EncodedProgram p = assemble(branch, sys, pm, x0, past, 0, opts);
    CHECK(stlmpc::solve(p.lp).status == LpSolution::Status::Infeasible);
    // softened: optimal, with the recorded violation paid by its own slack
    // and the reachable future shortfall by the steerable one
    AssembleOptions soft = opts;
    soft.soften = true;
    EncodedProgram ps = assemble(branch, sys, pm, x0, past, 0, soft);
    LpSolution sol = stlmpc::solve(ps.lp);
    REQUIRE(sol.status == LpSolution::Status::Optimal);
    CHECK(ps.history_slack_value(sol.x) >= 3.0 - 1e-7);
    CHECK(ps.slack_value(sol.x) >= 2.0 - 1e-6);  // z(1) can reach -3 + 1 at best
}

TEST_CASE("assemble: dropping input bounds makes an eventually-cost unbounded") {
    LtiSystem sys = scalar_system(1, 1);
    sys.u_min = Vec::Constant(1, -kInf);
    sys.u_max = Vec::Constant(1, kInf);
    PredicateMap pm = identity_preds(1);
    Formula body = Formula::eventually(Formula::predicate(1), 0, 1);
    auto branch = expand_branches(body).front();
    AssembleOptions opts;
    opts.N = 2;
    Mat past(1, 1);
    past << 0;
    EncodedProgram p = assemble(branch, sys, pm, Vec::Zero(1), past, 0, opts);
    CHECK(stlmpc::solve(p.lp).status == LpSolution::Status::Unbounded);
}

TEST_CASE("soften: feasible program keeps its optimizer, slack stays zero") {
    LtiSystem sys = scalar_system(1, 1);
    PredicateMap pm = identity_preds(1);
    Formula body = Formula::eventually(Formula::predicate(1), 0, 1);
    auto branch = expand_branches(body).front();
    AssembleOptions opts;
    opts.N = 2;
    Mat past(1, 1);
    past << 0.5;
    Vec x0 = Vec::Constant(1, 0.5);
    EncodedProgram hard = assemble(branch, sys, pm, x0, past, 0, opts);
    LpSolution base = stlmpc::solve(hard.lp);
    REQUIRE(base.status == LpSolution::Status::Optimal);

    AssembleOptions soft_opts = opts;
    soft_opts.soften = true;
    soft_opts.M = 1e6;
    EncodedProgram softened = assemble(branch, sys, pm, x0, past, 0, soft_opts);
    LpSolution sol = stlmpc::solve(softened.lp);
    REQUIRE(sol.status == LpSolution::Status::Optimal);
    CHECK(softened.slack_value(sol.x) == Approx(0.0).margin(1e-9));
    CHECK((softened.first_input(sol.x) - hard.first_input(base.x)).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("soften: least violation on contradictory rows") {
    // z >= 0 against z <= -1 collapses to xi* = 1/2 at z = -1/2.
    LpProblem p;
    p.cost = Vec::Zero(1);
    p.A.resize(2, 1);
    p.A << -1, 1;  // -z <= 0, z <= -1
    p.b.resize(2);
    p.b << 0, -1;
    p.lower = Vec::Constant(1, -kInf);
    p.upper = Vec::Constant(1, kInf);
    EncodedProgram prog;
    prog.lp = p;
    prog.tags.resize(2);
    prog.tags[0].kind = RowTag::Kind::Hard;
    prog.tags[0].t = 1;  // future rows share the steerable slack
    prog.tags[1].kind = RowTag::Kind::Hard;
    prog.tags[1].t = 1;
    soften(prog, 100.0);
    LpSolution sol = stlmpc::solve(prog.lp);
    REQUIRE(sol.status == LpSolution::Status::Optimal);
    CHECK(sol.x(1) == Approx(0.5).margin(1e-9));

    EncodedProgram zero;
    zero.lp = p;
    zero.tags = prog.tags;
    zero.tags.pop_back();
    soften(zero, 0.0);
    CHECK_FALSE(zero.warnings.empty());
}

TEST_CASE("property: encoder, averaged semantics, and assembled cost agree") {
    std::mt19937 rng(41);
    for (int i = 0; i < 300; ++i) {
        auto inst = oracle::random_encoder_instance(rng);
        INFO("instance " << i << ": " << to_string(inst.body) << " N=" << inst.N
                         << " k0=" << inst.k0);
        auto check = oracle::run_encoder_oracle(inst);
        CHECK(check.via_E == Approx(check.via_dsasr).margin(1e-9));
        CHECK(check.via_assemble == Approx(check.via_dsasr).margin(1e-9));
    }
}

TEST_CASE("epigraph exactness against grid search on tiny instances") {
    std::mt19937 rng(51);
    std::uniform_real_distribution<double> wide(-1.5, 1.5);
    for (int trial = 0; trial < 20; ++trial) {
        LtiSystem sys = scalar_system(wide(rng), 1.0 + std::abs(wide(rng)));
        PredicateMap pm;
        pm.C.resize(2, 1);
        pm.C << 1, -1;
        pm.c.resize(2);
        pm.c << wide(rng), wide(rng);
        Formula body = Formula::conj({Formula::always(Formula::predicate(1), 0, 1),
                                      Formula::eventually(Formula::predicate(2), 0, 1)});
        auto branch = expand_branches(body).front();
        const int N = 3;
        AssembleOptions opts;
        opts.N = N;
        opts.include_hard = false;  // pure max-of-sum-of-mins comparison
        Mat past(1, 2);
        Vec x0 = Vec::Constant(1, wide(rng));
        past.row(0) = eval_predicates(pm, x0).transpose();
        EncodedProgram p = assemble(branch, sys, pm, x0, past, 0, opts);
        LpSolution sol = stlmpc::solve(p.lp);
        REQUIRE(sol.status == LpSolution::Status::Optimal);
        double lp_opt = sol.objective + p.cost_offset;

        // plug the optimizer back into a direct evaluation
        {
            oracle::EncoderInstance inst;
            inst.sys = sys;
            inst.pm = pm;
            inst.body = body;
            inst.x0 = x0;
            inst.u_st = sol.x.segment(p.u_start(), p.n_inputs);
            inst.past = past;
            inst.k0 = 0;
            inst.N = N;
            auto check = oracle::run_encoder_oracle(inst);
            CHECK(lp_opt == Approx(check.via_dsasr).margin(1e-7));
        }

        // grid search cannot beat the LP
        double grid_best = -kInf;
        const int steps = 9;
        for (int i1 = 0; i1 < steps; ++i1)
            for (int i2 = 0; i2 < steps; ++i2)
                for (int i3 = 0; i3 < steps; ++i3) {
                    Vec u(3);
                    u << -1 + 2.0 * i1 / (steps - 1), -1 + 2.0 * i2 / (steps - 1),
                        -1 + 2.0 * i3 / (steps - 1);
                    oracle::EncoderInstance inst;
                    inst.sys = sys;
                    inst.pm = pm;
                    inst.body = body;
                    inst.x0 = x0;
                    inst.u_st = u;
                    inst.past = past;
                    inst.k0 = 0;
                    inst.N = N;
                    grid_best = std::max(grid_best, oracle::run_encoder_oracle(inst).via_dsasr);
                }
        CHECK(lp_opt >= grid_best - 1e-7);
    }
}
