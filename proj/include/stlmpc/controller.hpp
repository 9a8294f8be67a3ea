// stlmpc/controller.hpp — receding-horizon control loop
//
// Each step: expand the specification into disjunction branches, assemble
// and solve one LP per branch, apply the first input block of the best
// branch, shift the horizon.  All-time formulas re-solve over the sliding
// window [k0-h+1, k0+N-h]; one-time formulas pin the single evaluation
// instant of the triggering event until its window elapses.

#pragma once

#include "stlmpc/common.hpp"
#include "stlmpc/encoder.hpp"
#include "stlmpc/formula.hpp"
#include "stlmpc/linprog.hpp"
#include "stlmpc/robustness.hpp"
#include "stlmpc/system.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <vector>

namespace stlmpc {

// Raised when every branch of an unsoftened program is unsolvable.
struct InfeasibleRun : Error {
    int step;
    explicit InfeasibleRun(int k)
        : Error("no branch has a feasible program at step " + std::to_string(k)), step(k) {}
};

// ── Noise ───────────────────────────────────────────────────────────────────

struct NoiseModel {
    enum class Kind { None, AdditiveGaussianState };
    Kind kind = Kind::None;
    Vec std;  // per state component
    std::uint64_t seed = 0;
};

// Deterministic standard-normal stream: Box-Muller over the raw mt19937_64
// words, so identical seeds give identical trajectories on every platform.
class GaussianStream {
public:
    explicit GaussianStream(std::uint64_t seed) : eng_(seed) {}

    double next() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - std::ldexp(static_cast<double>(eng_() >> 11), -53);  // (0,1]
        double u2 = std::ldexp(static_cast<double>(eng_() >> 11), -53);        // [0,1)
        double r = std::sqrt(-2.0 * std::log(u1));
        double th = 2.0 * M_PI * u2;
        spare_ = r * std::sin(th);
        have_spare_ = true;
        return r * std::cos(th);
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// ── Per-step records ────────────────────────────────────────────────────────

struct StepResult {
    Vec u;
    bool solved = false;  // false while idle (before the event / after its window)
    LpSolution::Status status = LpSolution::Status::Breakdown;
    double objective = std::numeric_limits<double>::quiet_NaN();  // robustness part
    double xi = 0.0;
    int branch = -1;
    int iterations = 0;
    double solve_ms = 0.0;
};

struct Trajectory {
    double dt = 1.0;
    Mat states;  // (T+1) x n
    Mat inputs;  // T x m
    Mat preds;   // (T+1) x G
    Mat noise;   // T x n
    std::vector<StepResult> steps;

    int length() const { return static_cast<int>(inputs.rows()); }
    Signal signal() const { return Signal{0, preds}; }
};

struct ControlOptions {
    int N = 1;
    bool soften = true;
    double M = 0;  // 0 -> automatic scale
    double hard_margin = 1e-6;
    double interior_bias = 0;
    SolveOptions solver;
    std::map<int, MemberK1> member_k1;
};

// ── Disjunction branching ───────────────────────────────────────────────────

struct BranchChoice {
    int index = -1;
    EncodedProgram program;
    LpSolution solution;
    double objective = 0;  // robustness part (penalty removed)
    bool clean = false;    // solved with no slack in use
};

// Solves every branch over its own window and keeps the best: branches that
// need no slack outrank slack-using ones, then the larger objective wins,
// and exact ties keep the lowest index.
inline BranchChoice branch_disjunction(const std::vector<Branch>& branches, const LtiSystem& sys,
                                       const PredicateMap& pm, const Vec& x0, const Mat& past,
                                       int k0, const AssembleOptions& base,
                                       const SolveOptions& solver_opts) {
    if (branches.empty()) throw EncodeError("no branches to solve");
    BranchChoice best;
    bool have = false;
    for (std::size_t i = 0; i < branches.size(); ++i) {
        AssembleOptions opts = base;
        if (opts.one_time_k_event && branches[i].length() <= *opts.one_time_k_event)
            continue;  // this branch's window has already elapsed
        EncodedProgram prog;
        try {
            prog = assemble(branches[i], sys, pm, x0, past, k0, opts);
        } catch (const EncodeError&) {
            continue;
        }
        LpSolution sol = solve(prog.lp, solver_opts);
        if (sol.status != LpSolution::Status::Optimal) continue;
        double xi = prog.slack_value(sol.x);
        double objective = sol.objective + prog.cost_offset +
                           prog.M * (xi + prog.history_slack_value(sol.x));
        bool clean = xi <= 1e-7;
        bool better = !have || (clean && !best.clean) ||
                      (clean == best.clean && objective > best.objective);
        if (better) {
            best.index = static_cast<int>(i);
            best.program = std::move(prog);
            best.solution = std::move(sol);
            best.objective = objective;
            best.clean = clean;
            have = true;
        }
    }
    if (!have) throw InfeasibleRun(k0);
    return best;
}

// ── Controller ──────────────────────────────────────────────────────────────

class Controller {
public:
    Controller(LtiSystem sys, PredicateMap pm, Specification spec, ControlOptions opts)
        : sys_(std::move(sys)), pm_(std::move(pm)), spec_(std::move(spec)), opts_(std::move(opts)) {
        sys_.validate();
        pm_.validate();
        validate_against(spec_.body, pm_);
        branches_ = expand_branches(spec_.body);
        h_ = formula_length(spec_.body);
        if (opts_.N < h_)
            throw ScenarioError("horizon N = " + std::to_string(opts_.N) +
                                " is smaller than the formula length h = " + std::to_string(h_));
    }

    const std::vector<Branch>& branches() const { return branches_; }
    int formula_horizon() const { return h_; }
    int current_step() const { return k0_; }

    // Optional replacement for the replicated-first-sample history.
    void seed_past(const Mat& z_history) { seeded_past_ = z_history; }

    // Consumes the measured state at the current step, returns the input to
    // apply.  Advances the internal clock.
    StepResult step(const Vec& x) {
        Vec z = eval_predicates(pm_, x);
        if (buffer_.empty()) {
            if (seeded_past_ && seeded_past_->rows() > 0) {
                for (Eigen::Index r = 0; r < seeded_past_->rows(); ++r)
                    buffer_.push_back(seeded_past_->row(r).transpose());
            }
            while (static_cast<int>(buffer_.size()) < h_) buffer_.push_front(z);
        }
        buffer_.push_back(z);
        while (static_cast<int>(buffer_.size()) > h_ + 1) buffer_.pop_front();

        StepResult res;
        res.u = Vec::Zero(sys_.input_dim());

        AssembleOptions opts;
        opts.N = opts_.N;
        opts.soften = opts_.soften;
        opts.M = opts_.M;
        opts.hard_margin = opts_.hard_margin;
        opts.interior_bias = opts_.interior_bias;
        opts.member_k1 = opts_.member_k1;
        if (spec_.mode == SpecMode::OneTime) {
            if (k0_ < spec_.event_step || k0_ - spec_.event_step >= h_) {
                ++k0_;  // idle: nothing left to optimize
                return res;
            }
            opts.one_time_k_event = k0_ - spec_.event_step;
        }

        Mat past(static_cast<Eigen::Index>(buffer_.size()), pm_.size());
        for (std::size_t r = 0; r < buffer_.size(); ++r) past.row(static_cast<Eigen::Index>(r)) = buffer_[r].transpose();

        auto t0 = std::chrono::steady_clock::now();
        BranchChoice choice;
        try {
            choice = branch_disjunction(branches_, sys_, pm_, x, past, k0_, opts, opts_.solver);
        } catch (const InfeasibleRun&) {
            ++k0_;
            throw;
        }
        auto t1 = std::chrono::steady_clock::now();

        res.solved = true;
        res.status = choice.solution.status;
        res.objective = choice.objective;
        res.xi = choice.program.slack_value(choice.solution.x);
        res.branch = choice.index;
        res.iterations = choice.solution.iterations;
        res.solve_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        res.u = choice.program.first_input(choice.solution.x);
        ++k0_;
        return res;
    }

private:
    LtiSystem sys_;
    PredicateMap pm_;
    Specification spec_;
    ControlOptions opts_;
    std::vector<Branch> branches_;
    int h_ = 0;
    int k0_ = 0;
    std::deque<Vec> buffer_;
    std::optional<Mat> seeded_past_;
};

// ── Closed-loop simulation ──────────────────────────────────────────────────

inline Trajectory simulate(const LtiSystem& sys, const PredicateMap& pm, const Specification& spec,
                           const ControlOptions& opts, const NoiseModel& noise, int T,
                           const Vec& x0, const Mat* past_seed = nullptr) {
    if (T < 1) throw ScenarioError("simulation length must be at least 1 step");
    if (noise.kind == NoiseModel::Kind::AdditiveGaussianState &&
        noise.std.size() != sys.state_dim())
        throw DimensionError("noise std must have one entry per state component");

    Controller ctrl(sys, pm, spec, opts);
    if (past_seed) ctrl.seed_past(*past_seed);
    GaussianStream rng(noise.seed);

    const int n = sys.state_dim();
    Trajectory traj;
    traj.dt = sys.dt;
    traj.states.resize(T + 1, n);
    traj.inputs.resize(T, sys.input_dim());
    traj.preds.resize(T + 1, pm.size());
    traj.noise.setZero(T, n);
    traj.steps.reserve(static_cast<std::size_t>(T));

    Vec x = x0;
    for (int k = 0; k < T; ++k) {
        traj.states.row(k) = x.transpose();
        traj.preds.row(k) = eval_predicates(pm, x).transpose();
        StepResult res = ctrl.step(x);
        Vec w = Vec::Zero(n);
        if (noise.kind == NoiseModel::Kind::AdditiveGaussianState)
            for (int i = 0; i < n; ++i) w(i) = noise.std(i) * rng.next();
        traj.inputs.row(k) = res.u.transpose();
        traj.noise.row(k) = w.transpose();
        x = sys.step(x, res.u) + w;
        traj.steps.push_back(std::move(res));
    }
    traj.states.row(T) = x.transpose();
    traj.preds.row(T) = eval_predicates(pm, x).transpose();
    return traj;
}

// ── Signal-to-noise ratio ───────────────────────────────────────────────────
// Mean squared state power over mean squared injected-noise power, in dB.
// A noise-free run has infinite SNR by convention.

inline double snr_db(const Trajectory& traj) {
    double px = traj.states.squaredNorm() / static_cast<double>(traj.states.size());
    double pv = traj.noise.squaredNorm() / static_cast<double>(traj.noise.size());
    if (pv <= 0) return kInf;
    return 10.0 * std::log10(px / pv);
}

// Chooses per-component standard deviations sigma * shape so a run with the
// pilot's signal power lands on the target SNR in expectation.
inline Vec calibrate_noise_std(const Trajectory& pilot, double target_snr_db, const Vec& shape) {
    double px = pilot.states.squaredNorm() / static_cast<double>(pilot.states.size());
    double shape2 = shape.squaredNorm();
    if (shape2 <= 0) throw ScenarioError("noise shape must have a nonzero component");
    double ratio = std::pow(10.0, target_snr_db / 10.0);
    double n = static_cast<double>(shape.size());
    double sigma = std::sqrt(px * n / (ratio * shape2));
    return sigma * shape;
}

// ── Run verdicts ────────────────────────────────────────────────────────────

struct MemberVerdict {
    std::string text;
    bool satisfied = false;
    int entered_at = -1;  // F members: first step inside the operand's region
};

struct RunVerdict {
    bool satisfied = false;
    bool evaluated = true;  // false when the run is too short to judge
    std::vector<MemberVerdict> members;
};

inline std::vector<const Formula*> flattened_members(const Formula& body) {
    int next = 0;
    std::vector<const Formula*> order;
    detail::index_members(body, next, order);
    return order;
}

// Judges the realized trajectory against the specification: one-time
// formulas at their trigger step, all-time formulas at every step whose
// window the run covers.
inline RunVerdict evaluate_run(const Specification& spec, const Trajectory& traj) {
    RunVerdict v;
    Signal sig = traj.signal();
    int h = formula_length(spec.body);
    int T = traj.length();

    auto member_verdicts = [&](int at) {
        for (const Formula* mf : flattened_members(spec.body)) {
            MemberVerdict mv;
            mv.text = to_string(*mf);
            mv.satisfied = boolean_sat(*mf, sig, at);
            if (mf->kind == Formula::Kind::Eventually) {
                for (int k = at + mf->lo; k <= at + mf->hi && k <= sig.end(); ++k)
                    if (boolean_sat(mf->children[0], sig, k)) {
                        mv.entered_at = k;
                        break;
                    }
            }
            v.members.push_back(std::move(mv));
        }
    };

    if (spec.mode == SpecMode::OneTime) {
        if (spec.event_step + h > T) {
            v.evaluated = false;
            return v;
        }
        v.satisfied = boolean_sat(spec.body, sig, spec.event_step);
        member_verdicts(spec.event_step);
        return v;
    }
    if (T < h) {
        v.evaluated = false;
        return v;
    }
    v.satisfied = true;
    for (int k = 0; k + h <= T; ++k)
        if (!boolean_sat(spec.body, sig, k)) {
            v.satisfied = false;
            break;
        }
    member_verdicts(0);
    return v;
}

}  // namespace stlmpc
