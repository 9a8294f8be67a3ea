// stlmpc command-line front end.
//
//   stlmpc simulate <scenario.json>   closed-loop run, traces + summary
//   stlmpc monitor  <trace.csv>       evaluate a formula over a recorded trace
//   stlmpc dump-lp  <scenario.json>   emit the assembled LP and E/Q/R fixtures
//
// Exit codes: 0 specification satisfied, 1 unsatisfied, 2 invalid input,
// 3 infeasible program with softening disabled.

#include "stlmpc/stlmpc.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonFlags {
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<bool> soften;
    std::optional<double> tol;
};

std::string resolve_out_dir(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("STLMPC_OUT_DIR"); env && *env) return env;
    return "out";
}

void apply_overrides(stlmpc::Scenario& sc, const CommonFlags& flags) {
    if (flags.seed) sc.noise.seed = *flags.seed;
    if (flags.soften) sc.soften = *flags.soften;
    if (flags.tol) sc.tol = *flags.tol;
}

stlmpc::NoiseModel resolve_noise(const stlmpc::Scenario& sc) {
    stlmpc::NoiseModel nm;
    nm.kind = sc.noise.kind;
    nm.seed = sc.noise.seed;
    if (nm.kind == stlmpc::NoiseModel::Kind::None) return nm;
    if (sc.noise.std.size() > 0) {
        nm.std = sc.noise.std;
        return nm;
    }
    // Calibrate against a noise-free pilot run of the same scenario.
    stlmpc::NoiseModel none;
    auto pilot = stlmpc::simulate(sc.system, sc.predicates, sc.spec(), sc.control_options(), none,
                                  sc.steps, sc.x0);
    nm.std = stlmpc::calibrate_noise_std(pilot, *sc.noise.target_snr_db, sc.noise.shape);
    return nm;
}

int plot_y_index(const stlmpc::Scenario& sc) {
    if (sc.plot_y >= 0) return sc.plot_y;
    return sc.system.state_dim() > 2 ? 2 : sc.system.state_dim() - 1;
}

int run_simulate(const std::string& scenario_path, const CommonFlags& flags) {
    stlmpc::Scenario sc = stlmpc::load_scenario(scenario_path);
    apply_overrides(sc, flags);
    fs::path out(resolve_out_dir(flags.out_dir));
    fs::create_directories(out);

    stlmpc::NoiseModel nm = resolve_noise(sc);
    stlmpc::Trajectory traj;
    try {
        traj = stlmpc::simulate(sc.system, sc.predicates, sc.spec(), sc.control_options(), nm,
                                sc.steps, sc.x0);
    } catch (const stlmpc::InfeasibleRun& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return 3;
    }

    stlmpc::RunVerdict verdict = stlmpc::evaluate_run(sc.spec(), traj);
    double snr = stlmpc::snr_db(traj);

    stlmpc::write_trajectory_csv((out / "trajectory.csv").string(), traj);
    stlmpc::write_path_csv((out / "path.csv").string(), traj, sc.plot_x, plot_y_index(sc));
    {
        std::ofstream rf(out / "regions.csv");
        rf << "label,xmin,xmax,ymin,ymax\n";
        for (const auto& r : sc.plot_regions)
            rf << r.label << "," << r.xmin << "," << r.xmax << "," << r.ymin << "," << r.ymax
               << "\n";
    }

    json summary;
    summary["scenario"] = sc.name;
    summary["satisfied"] = verdict.satisfied;
    summary["evaluated"] = verdict.evaluated;
    json members = json::array();
    for (const auto& mv : verdict.members) {
        json m;
        m["formula"] = mv.text;
        m["satisfied"] = mv.satisfied;
        if (mv.entered_at >= 0) m["entered_at"] = mv.entered_at;
        members.push_back(std::move(m));
    }
    summary["members"] = std::move(members);
    summary["snr_db"] = std::isinf(snr) ? json(nullptr) : json(snr);
    summary["steps"] = sc.steps;
    double ms_total = 0, ms_max = 0, xi_max = 0;
    int solved = 0;
    for (const auto& st : traj.steps) {
        if (!st.solved) continue;
        ++solved;
        ms_total += st.solve_ms;
        ms_max = std::max(ms_max, st.solve_ms);
        xi_max = std::max(xi_max, st.xi);
    }
    summary["solves"] = solved;
    summary["solve_ms_mean"] = solved ? ms_total / solved : 0.0;
    summary["solve_ms_max"] = ms_max;
    summary["xi_max"] = xi_max;
    std::ofstream sf(out / "summary.json");
    sf << summary.dump(2) << "\n";

    std::cout << (verdict.satisfied ? "satisfied" : "unsatisfied")
              << (verdict.evaluated ? "" : " (run too short to evaluate)") << "; outputs in "
              << out.string() << "\n";
    return verdict.satisfied ? 0 : 1;
}

int run_monitor(const std::string& trace_path, const std::string& formula, int at,
                const std::string& scenario_path, const std::string& units_flag, double dt) {
    std::optional<stlmpc::Scenario> sc;
    const stlmpc::PredicateMap* pm = nullptr;
    if (!scenario_path.empty()) {
        sc = stlmpc::load_scenario(scenario_path);
        pm = &sc->predicates;
        dt = sc->system.dt;
    }
    stlmpc::ParseOptions po;
    po.dt = dt;
    if (units_flag == "seconds") po.units = stlmpc::IntervalUnits::Seconds;
    stlmpc::Formula f = stlmpc::parse_formula_body(formula, po);
    stlmpc::Signal sig = stlmpc::read_trace_csv(trace_path, pm);

    bool sat = stlmpc::boolean_sat(f, sig, at);
    double sr = stlmpc::space_robustness(f, sig, at);
    double da = stlmpc::dasr(f, sig, at);
    double ds = stlmpc::dsasr(f, sig, at);
    std::cout << "formula:          " << stlmpc::to_string(f) << "\n"
              << "at step:          " << at << "\n"
              << "boolean:          " << (sat ? "true" : "false") << "\n"
              << "space_robustness: " << stlmpc::format_double(sr) << "\n"
              << "dasr:             " << stlmpc::format_double(da) << "\n"
              << "dsasr:            " << stlmpc::format_double(ds) << "\n";
    return 0;
}

int run_dump_lp(const std::string& scenario_path, int step, const CommonFlags& flags) {
    stlmpc::Scenario sc = stlmpc::load_scenario(scenario_path);
    apply_overrides(sc, flags);
    fs::path out(resolve_out_dir(flags.out_dir));
    fs::create_directories(out);

    // Walk the noise-free closed loop to the requested step so the dump is a
    // deterministic snapshot of what the controller would assemble there.
    stlmpc::Specification spec = sc.spec();
    int h = stlmpc::formula_length(spec.body);
    stlmpc::Controller ctrl(sc.system, sc.predicates, spec, sc.control_options());
    stlmpc::Vec x = sc.x0;
    std::vector<stlmpc::Vec> zs{stlmpc::eval_predicates(sc.predicates, x)};
    for (int k = 0; k < step; ++k) {
        stlmpc::StepResult r = ctrl.step(x);
        x = sc.system.step(x, r.u);
        zs.push_back(stlmpc::eval_predicates(sc.predicates, x));
    }
    std::deque<stlmpc::Vec> zbuf(zs.begin(), zs.end());
    while (static_cast<int>(zbuf.size()) < h + 1) zbuf.push_front(zs.front());
    while (static_cast<int>(zbuf.size()) > h + 1) zbuf.pop_front();
    stlmpc::Mat past(static_cast<Eigen::Index>(zbuf.size()), sc.predicates.size());
    for (std::size_t r = 0; r < zbuf.size(); ++r) past.row(static_cast<Eigen::Index>(r)) = zbuf[r].transpose();

    stlmpc::AssembleOptions opts;
    opts.N = sc.horizon;
    opts.soften = sc.soften;
    opts.M = sc.M;
    opts.member_k1 = sc.member_k1;
    if (spec.mode == stlmpc::SpecMode::OneTime) {
        if (step < spec.event_step || step - spec.event_step >= h) {
            std::cerr << "step " << step << " is outside the one-time optimization window\n";
            return 2;
        }
        opts.one_time_k_event = step - spec.event_step;
    }

    auto branches = stlmpc::expand_branches(spec.body);
    for (std::size_t bi = 0; bi < branches.size(); ++bi) {
        const auto& branch = branches[bi];
        std::string prefix = branches.size() > 1 ? "branch" + std::to_string(bi) + "_" : "";
        stlmpc::EncodedProgram prog =
            stlmpc::assemble(branch, sc.system, sc.predicates, x, past, step, opts);
        stlmpc::write_lp_text((out / (prefix + "lp.txt")).string(), prog.lp, prog.cost_offset);

        std::vector<stlmpc::EMatrix> members, padded;
        std::vector<int> widths;
        for (std::size_t j = 0; j < branch.members.size(); ++j) {
            members.push_back(stlmpc::build_member_E(branch, static_cast<int>(j), step, opts));
            widths.push_back(members.back().n_preds);
        }
        for (std::size_t j = 0; j < members.size(); ++j) {
            stlmpc::write_matrix_csv((out / (prefix + "E" + std::to_string(j) + ".csv")).string(),
                                     members[j].coeffs);
            padded.push_back(stlmpc::pad_for_conjunction(members[j], static_cast<int>(j), widths));
        }
        if (members.size() > 1) {
            auto [Q, R] = stlmpc::build_QR(padded, prog.n_inputs);
            stlmpc::write_matrix_csv((out / (prefix + "Q.csv")).string(), Q);
            stlmpc::write_matrix_csv((out / (prefix + "R.csv")).string(), R);
        }
        for (const auto& w : prog.warnings) std::cerr << "warning: " << w << "\n";
    }
    std::cout << "wrote LP dump for step " << step << " to " << out.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Temporal-logic model predictive control"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string scenario_path, trace_path, formula, units_flag = "steps";
    int at = 0, step = 0;
    double dt = 1.0;
    bool soften_on = false, soften_off = false;
    std::uint64_t seed_val = 0;
    double tol_val = 0;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--out-dir", flags.out_dir, "output directory (or $STLMPC_OUT_DIR)");
        cmd->add_option("--seed", seed_val, "override the scenario noise seed")
            ->each([&](const std::string&) { flags.seed = seed_val; });
        cmd->add_flag("--soften", soften_on, "force slack softening on");
        cmd->add_flag("--no-soften", soften_off, "force slack softening off");
        cmd->add_option("--tol", tol_val, "solver tolerance")
            ->each([&](const std::string&) { flags.tol = tol_val; });
    };

    CLI::App* sim = app.add_subcommand("simulate", "closed-loop run of a scenario");
    sim->add_option("scenario", scenario_path, "scenario JSON file")->required();
    add_common(sim);

    CLI::App* mon = app.add_subcommand("monitor", "evaluate a formula over a trace CSV");
    mon->add_option("trace", trace_path, "trace CSV (k,z1.. or k,x1..)")->required();
    mon->add_option("--formula", formula, "formula text")->required();
    mon->add_option("--at", at, "evaluation step")->required();
    mon->add_option("--scenario", scenario_path, "scenario providing the predicate map");
    mon->add_option("--units", units_flag, "interval units: steps|seconds");
    mon->add_option("--dt", dt, "sampling period for seconds mode");

    CLI::App* dump = app.add_subcommand("dump-lp", "emit the assembled LP and E/Q/R matrices");
    dump->add_option("scenario", scenario_path, "scenario JSON file")->required();
    dump->add_option("--step", step, "controller step to snapshot");
    add_common(dump);

    CLI11_PARSE(app, argc, argv);

    if (soften_on && soften_off) {
        std::cerr << "--soften and --no-soften are mutually exclusive\n";
        return 2;
    }
    if (soften_on) flags.soften = true;
    if (soften_off) flags.soften = false;

    try {
        if (sim->parsed()) return run_simulate(scenario_path, flags);
        if (mon->parsed()) return run_monitor(trace_path, formula, at, scenario_path, units_flag, dt);
        if (dump->parsed()) return run_dump_lp(scenario_path, step, flags);
    } catch (const stlmpc::InfeasibleRun& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return 3;
    } catch (const stlmpc::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
