// stlmpc/scenario.hpp — scenario files
//
// A scenario bundles everything one run needs: plant matrices, the
// predicate map, the specification text with an explicit interval unit,
// horizon and run length, noise, solver knobs, and plot hints.  Stored as
// JSON.  Loading normalizes the scenario (formula bounds in steps, units
// field rewritten accordingly) so that load -> save -> load is exact.

#pragma once

#include "stlmpc/common.hpp"
#include "stlmpc/controller.hpp"
#include "stlmpc/encoder.hpp"
#include "stlmpc/formula.hpp"
#include "stlmpc/system.hpp"

#include <json.hpp>

#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace stlmpc {

struct PlotRegion {
    std::string label;
    double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
};

struct NoiseConfig {
    NoiseModel::Kind kind = NoiseModel::Kind::None;
    Vec std;                               // explicit per-component std, or
    std::optional<double> target_snr_db;   // calibrate against a pilot run
    Vec shape;                             // noise direction for calibration
    std::uint64_t seed = 0;
};

struct Scenario {
    std::string name;
    LtiSystem system;
    PredicateMap predicates;
    Vec x0;

    std::string formula_text;
    SpecMode mode = SpecMode::AllTime;
    int event_step = 0;
    IntervalUnits units = IntervalUnits::Steps;

    int horizon = 1;  // N, steps
    int steps = 1;    // simulation length T, steps
    std::map<int, MemberK1> member_k1;

    NoiseConfig noise;
    double tol = 1e-9;
    bool soften = true;
    double M = 0;
    double hard_margin = 1e-6;
    double interior_bias = 0;

    int plot_x = 0, plot_y = -1;
    std::vector<PlotRegion> plot_regions;
    std::string past_file;

    Specification spec() const {
        ParseOptions po;
        po.units = units;
        po.dt = system.dt;
        po.mode = mode;
        po.event_step = event_step;
        return parse_formula(formula_text, po);
    }

    ControlOptions control_options() const {
        ControlOptions c;
        c.N = horizon;
        c.soften = soften;
        c.M = M;
        c.hard_margin = hard_margin;
        c.interior_bias = interior_bias;
        c.solver.feas_tol = tol;
        c.solver.cost_tol = tol;
        c.member_k1 = member_k1;
        return c;
    }
};

namespace detail {

inline Mat json_matrix(const nlohmann::json& j, const std::string& what) {
    if (!j.is_array() || j.empty()) throw ScenarioError(what + " must be a nonempty array");
    const auto rows = j.size();
    const auto cols = j.front().size();
    Mat m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        if (j[r].size() != cols) throw ScenarioError(what + " has ragged rows");
        for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
    return m;
}

inline Vec json_vector(const nlohmann::json& j, const std::string& what) {
    if (!j.is_array()) throw ScenarioError(what + " must be an array");
    Vec v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return v;
}

inline nlohmann::json matrix_json(const Mat& m) {
    nlohmann::json j = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        j.push_back(std::move(row));
    }
    return j;
}

inline nlohmann::json vector_json(const Vec& v) {
    nlohmann::json j = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
    return j;
}

}  // namespace detail

inline Scenario scenario_from_json(const nlohmann::json& j) {
    Scenario s;
    try {
        s.name = j.value("name", "scenario");
        const auto& sys = j.at("system");
        s.system.A = detail::json_matrix(sys.at("A"), "system.A");
        s.system.B = detail::json_matrix(sys.at("B"), "system.B");
        s.system.dt = sys.value("dt", 1.0);
        s.system.u_min = detail::json_vector(sys.at("u_min"), "system.u_min");
        s.system.u_max = detail::json_vector(sys.at("u_max"), "system.u_max");

        const auto& preds = j.at("predicates");
        s.predicates.C = detail::json_matrix(preds.at("C"), "predicates.C");
        s.predicates.c = detail::json_vector(preds.at("c"), "predicates.c");
        if (preds.contains("labels"))
            s.predicates.labels = preds.at("labels").get<std::vector<std::string>>();

        s.x0 = detail::json_vector(j.at("x0"), "x0");

        const auto& spec = j.at("spec");
        s.formula_text = spec.at("formula").get<std::string>();
        std::string mode = spec.value("mode", "all_time");
        if (mode == "all_time") s.mode = SpecMode::AllTime;
        else if (mode == "one_time") s.mode = SpecMode::OneTime;
        else throw ScenarioError("spec.mode must be 'all_time' or 'one_time'");
        s.event_step = spec.value("event_step", 0);
        std::string units = spec.value("interval_units", "steps");
        if (units == "steps") s.units = IntervalUnits::Steps;
        else if (units == "seconds") s.units = IntervalUnits::Seconds;
        else throw ScenarioError("spec.interval_units must be 'steps' or 'seconds'");

        s.horizon = j.at("horizon").get<int>();
        s.steps = j.at("steps").get<int>();

        if (j.contains("k1_offsets")) {
            const auto& arr = j.at("k1_offsets");
            for (std::size_t i = 0; i < arr.size(); ++i) {
                if (arr[i].is_null()) continue;
                MemberK1 k1;
                k1.offset = arr[i].get<int>();
                s.member_k1[static_cast<int>(i)] = k1;
            }
        }
        if (j.contains("k1_tables")) {
            for (const auto& [key, val] : j.at("k1_tables").items()) {
                MemberK1& k1 = s.member_k1[std::stoi(key)];
                std::map<int, int> table;
                for (const auto& pair : val) table[pair[0].get<int>()] = pair[1].get<int>();
                k1.table = std::move(table);
            }
        }

        if (j.contains("noise")) {
            const auto& noise = j.at("noise");
            std::string kind = noise.value("kind", "none");
            if (kind == "none") s.noise.kind = NoiseModel::Kind::None;
            else if (kind == "gaussian") s.noise.kind = NoiseModel::Kind::AdditiveGaussianState;
            else throw ScenarioError("noise.kind must be 'none' or 'gaussian'");
            if (noise.contains("std")) s.noise.std = detail::json_vector(noise.at("std"), "noise.std");
            if (noise.contains("target_snr_db") && !noise.at("target_snr_db").is_null())
                s.noise.target_snr_db = noise.at("target_snr_db").get<double>();
            if (noise.contains("shape"))
                s.noise.shape = detail::json_vector(noise.at("shape"), "noise.shape");
            s.noise.seed = noise.value("seed", 0ULL);
        }

        if (j.contains("solver")) {
            const auto& solver = j.at("solver");
            s.tol = solver.value("tol", 1e-9);
            s.soften = solver.value("soften", true);
            s.M = solver.value("M", 0.0);
            s.hard_margin = solver.value("hard_margin", 1e-6);
            s.interior_bias = solver.value("interior_bias", 0.0);
        }

        if (j.contains("plot")) {
            s.plot_x = j.at("plot").value("x_index", 0);
            s.plot_y = j.at("plot").value("y_index", -1);
        }
        if (j.contains("plot_regions")) {
            for (const auto& r : j.at("plot_regions")) {
                PlotRegion pr;
                pr.label = r.value("label", "");
                pr.xmin = r.at("xmin").get<double>();
                pr.xmax = r.at("xmax").get<double>();
                pr.ymin = r.at("ymin").get<double>();
                pr.ymax = r.at("ymax").get<double>();
                s.plot_regions.push_back(std::move(pr));
            }
        }
        s.past_file = j.value("past_file", "");
    } catch (const nlohmann::json::exception& e) {
        throw ScenarioError(std::string("malformed scenario: ") + e.what());
    }
    return s;
}

// Cross-field checks with messages that name the violated bound.
inline void validate_scenario(const Scenario& s) {
    s.system.validate();
    s.predicates.validate();
    if (s.predicates.state_dim() != s.system.state_dim())
        throw ScenarioError("predicates.C has " + std::to_string(s.predicates.state_dim()) +
                            " columns but the system state dimension is " +
                            std::to_string(s.system.state_dim()));
    if (s.x0.size() != s.system.state_dim())
        throw ScenarioError("x0 has " + std::to_string(s.x0.size()) +
                            " entries but the state dimension is " +
                            std::to_string(s.system.state_dim()));
    Specification spec = s.spec();  // throws ParseError on bad text
    validate_against(spec.body, s.predicates);
    if (classify(spec) == FragmentClass::Unsupported)
        throw ScenarioError("specification is outside the supported fragment (nested temporal "
                            "operators or a missing temporal operator)");
    int h = formula_length(spec.body);
    if (s.horizon < h)
        throw ScenarioError("horizon N = " + std::to_string(s.horizon) +
                            " violates N >= formula length h = " + std::to_string(h));
    if (s.steps < 1) throw ScenarioError("steps T = " + std::to_string(s.steps) +
                                         " violates T >= 1");
    if (s.mode == SpecMode::OneTime && s.event_step < 0)
        throw ScenarioError("event_step must be nonnegative");
    if (s.noise.kind == NoiseModel::Kind::AdditiveGaussianState) {
        bool has_std = s.noise.std.size() > 0;
        bool has_target = s.noise.target_snr_db.has_value() && s.noise.shape.size() > 0;
        if (!has_std && !has_target)
            throw ScenarioError("gaussian noise needs either 'std' or 'target_snr_db' + 'shape'");
        if (has_std && s.noise.std.size() != s.system.state_dim())
            throw ScenarioError("noise.std needs one entry per state component");
        if (s.noise.shape.size() > 0 && s.noise.shape.size() != s.system.state_dim())
            throw ScenarioError("noise.shape needs one entry per state component");
    }
    int n_members = static_cast<int>(flattened_members(spec.body).size());
    for (const auto& [idx, k1] : s.member_k1) {
        (void)k1;
        if (idx < 0 || idx >= n_members)
            throw ScenarioError("k1 option references member " + std::to_string(idx) +
                                " but the formula has " + std::to_string(n_members));
    }
}

// Rewrites the formula with step bounds and canonical spelling.
inline void normalize_scenario(Scenario& s) {
    Specification spec = s.spec();
    s.formula_text = to_string(spec.body);
    s.units = IntervalUnits::Steps;
}

inline nlohmann::json scenario_to_json(const Scenario& s) {
    nlohmann::json j;
    j["name"] = s.name;
    j["system"] = {{"A", detail::matrix_json(s.system.A)},
                   {"B", detail::matrix_json(s.system.B)},
                   {"dt", s.system.dt},
                   {"u_min", detail::vector_json(s.system.u_min)},
                   {"u_max", detail::vector_json(s.system.u_max)}};
    j["predicates"] = {{"C", detail::matrix_json(s.predicates.C)},
                       {"c", detail::vector_json(s.predicates.c)}};
    if (!s.predicates.labels.empty()) j["predicates"]["labels"] = s.predicates.labels;
    j["x0"] = detail::vector_json(s.x0);
    j["spec"] = {{"formula", s.formula_text},
                 {"mode", s.mode == SpecMode::AllTime ? "all_time" : "one_time"},
                 {"event_step", s.event_step},
                 {"interval_units", s.units == IntervalUnits::Steps ? "steps" : "seconds"}};
    j["horizon"] = s.horizon;
    j["steps"] = s.steps;
    if (!s.member_k1.empty()) {
        int max_idx = s.member_k1.rbegin()->first;
        nlohmann::json offsets = nlohmann::json::array();
        bool any_offset = false;
        nlohmann::json tables = nlohmann::json::object();
        for (int i = 0; i <= max_idx; ++i) {
            auto it = s.member_k1.find(i);
            if (it != s.member_k1.end() && it->second.offset) {
                offsets.push_back(*it->second.offset);
                any_offset = true;
            } else {
                offsets.push_back(nullptr);
            }
            if (it != s.member_k1.end() && it->second.table) {
                nlohmann::json pairs = nlohmann::json::array();
                for (const auto& [kp, k1] : *it->second.table)
                    pairs.push_back(nlohmann::json::array({kp, k1}));
                tables[std::to_string(i)] = std::move(pairs);
            }
        }
        if (any_offset) j["k1_offsets"] = std::move(offsets);
        if (!tables.empty()) j["k1_tables"] = std::move(tables);
    }
    j["noise"] = nlohmann::json::object();
    j["noise"]["kind"] = s.noise.kind == NoiseModel::Kind::None ? "none" : "gaussian";
    if (s.noise.std.size() > 0) j["noise"]["std"] = detail::vector_json(s.noise.std);
    if (s.noise.target_snr_db) j["noise"]["target_snr_db"] = *s.noise.target_snr_db;
    if (s.noise.shape.size() > 0) j["noise"]["shape"] = detail::vector_json(s.noise.shape);
    j["noise"]["seed"] = s.noise.seed;
    j["solver"] = {{"tol", s.tol},
                   {"soften", s.soften},
                   {"M", s.M},
                   {"hard_margin", s.hard_margin},
                   {"interior_bias", s.interior_bias}};
    j["plot"] = {{"x_index", s.plot_x}, {"y_index", s.plot_y}};
    if (!s.plot_regions.empty()) {
        nlohmann::json regions = nlohmann::json::array();
        for (const auto& r : s.plot_regions)
            regions.push_back({{"label", r.label},
                               {"xmin", r.xmin},
                               {"xmax", r.xmax},
                               {"ymin", r.ymin},
                               {"ymax", r.ymax}});
        j["plot_regions"] = std::move(regions);
    }
    if (!s.past_file.empty()) j["past_file"] = s.past_file;
    return j;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot open scenario file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ScenarioError(std::string("scenario is not valid JSON: ") + e.what());
    }
    Scenario s = scenario_from_json(j);
    validate_scenario(s);
    normalize_scenario(s);
    return s;
}

inline void save_scenario(const Scenario& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ScenarioError("cannot write scenario file: " + path);
    out << scenario_to_json(s).dump(2) << "\n";
}

}  // namespace stlmpc
