// stlmpc/io.hpp — trace/trajectory CSV, matrix CSV, LP text format

#pragma once

#include "stlmpc/common.hpp"
#include "stlmpc/controller.hpp"
#include "stlmpc/encoder.hpp"
#include "stlmpc/linprog.hpp"
#include "stlmpc/robustness.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace stlmpc {

// Shortest decimal that round-trips the double; keeps fixtures byte-stable.
inline std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline void write_matrix_csv(std::ostream& out, const Mat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c) out << ",";
            out << format_double(m(r, c));
        }
        out << "\n";
    }
}

inline void write_matrix_csv(const std::string& path, const Mat& m) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    write_matrix_csv(out, m);
}

// ── Trajectory CSV ──────────────────────────────────────────────────────────
// k, t_seconds, x*, u*, z*, objective, xi, branch.  The final state row has
// no input or solver columns.

inline void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << "k,t_seconds";
    for (Eigen::Index i = 0; i < traj.states.cols(); ++i) out << ",x" << i + 1;
    for (Eigen::Index i = 0; i < traj.inputs.cols(); ++i) out << ",u" << i + 1;
    for (Eigen::Index i = 0; i < traj.preds.cols(); ++i) out << ",z" << i + 1;
    out << ",objective,xi,branch\n";
    for (Eigen::Index k = 0; k <= traj.length(); ++k) {
        out << k << "," << format_double(static_cast<double>(k) * traj.dt);
        for (Eigen::Index i = 0; i < traj.states.cols(); ++i)
            out << "," << format_double(traj.states(k, i));
        bool has_step = k < traj.length();
        for (Eigen::Index i = 0; i < traj.inputs.cols(); ++i)
            out << "," << (has_step ? format_double(traj.inputs(k, i)) : std::string());
        for (Eigen::Index i = 0; i < traj.preds.cols(); ++i)
            out << "," << format_double(traj.preds(k, i));
        if (has_step) {
            const StepResult& st = traj.steps[static_cast<std::size_t>(k)];
            out << "," << (st.solved ? format_double(st.objective) : std::string()) << ","
                << format_double(st.xi) << "," << st.branch;
        } else {
            out << ",,,";
        }
        out << "\n";
    }
}

// Planar path plus region rectangles as plain plot data.
inline void write_path_csv(const std::string& path, const Trajectory& traj, int xi, int yi) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << "x,y\n";
    for (Eigen::Index k = 0; k < traj.states.rows(); ++k)
        out << format_double(traj.states(k, xi)) << "," << format_double(traj.states(k, yi))
            << "\n";
}

// ── Trace CSV ingestion ─────────────────────────────────────────────────────
// Header either  k,z1..zG  (predicate values) or  k,x1..xn  (states run
// through a PredicateMap).  Steps must be contiguous.

inline Signal read_trace_csv(const std::string& path, const PredicateMap* pm = nullptr) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open trace: " + path);
    std::string line;
    if (!std::getline(in, line)) throw Error("trace is empty: " + path);

    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string field;
        while (std::getline(ss, field, ',')) {
            while (!field.empty() && (field.front() == ' ' || field.front() == '\t'))
                field.erase(field.begin());
            while (!field.empty() && (field.back() == ' ' || field.back() == '\r' ||
                                      field.back() == '\t'))
                field.pop_back();
            out.push_back(field);
        }
        return out;
    };

    auto header = split(line);
    if (header.size() < 2 || header[0] != "k")
        throw Error("trace header must start with 'k' followed by z* or x* columns");
    bool is_state = header[1].size() > 0 && header[1][0] == 'x';
    if (is_state && !pm)
        throw Error("trace carries states; a predicate map is required to evaluate them");

    std::vector<int> ks;
    std::vector<Vec> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        auto fields = split(line);
        if (fields.size() != header.size())
            throw Error("trace row has " + std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(header.size()));
        ks.push_back(std::stoi(fields[0]));
        Vec v(static_cast<Eigen::Index>(fields.size()) - 1);
        for (std::size_t i = 1; i < fields.size(); ++i)
            v(static_cast<Eigen::Index>(i - 1)) = std::stod(fields[i]);
        rows.push_back(std::move(v));
    }
    if (rows.empty()) throw Error("trace has no data rows");
    for (std::size_t i = 1; i < ks.size(); ++i)
        if (ks[i] != ks[i - 1] + 1) throw Error("trace steps are not contiguous");

    Signal sig;
    sig.start = ks.front();
    if (is_state) {
        Mat states(static_cast<Eigen::Index>(rows.size()), rows.front().size());
        for (std::size_t r = 0; r < rows.size(); ++r)
            states.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
        sig = make_signal(*pm, states, ks.front());
    } else {
        sig.z.resize(static_cast<Eigen::Index>(rows.size()), rows.front().size());
        for (std::size_t r = 0; r < rows.size(); ++r)
            sig.z.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
    }
    return sig;
}

// ── LP text format ──────────────────────────────────────────────────────────
//
//   # stlmpc lp v1
//   maximize
//   c1 c2 ...
//   offset <value>
//   subject_to <rows>
//   a1 a2 ... <= b
//   bounds
//   l u            (one line per variable, inf/-inf allowed)

inline void write_lp_text(std::ostream& out, const LpProblem& p, double offset = 0) {
    out << "# stlmpc lp v1\n";
    out << "maximize\n";
    for (int j = 0; j < p.num_vars(); ++j) out << (j ? " " : "") << format_double(p.cost(j));
    out << "\noffset " << format_double(offset) << "\n";
    out << "subject_to " << p.num_rows() << "\n";
    for (int r = 0; r < p.num_rows(); ++r) {
        for (int j = 0; j < p.num_vars(); ++j) out << format_double(p.A(r, j)) << " ";
        out << "<= " << format_double(p.b(r)) << "\n";
    }
    out << "bounds\n";
    for (int j = 0; j < p.num_vars(); ++j)
        out << format_double(p.lower(j)) << " " << format_double(p.upper(j)) << "\n";
}

inline void write_lp_text(const std::string& path, const LpProblem& p, double offset = 0) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    write_lp_text(out, p, offset);
}

inline double parse_bound_token(const std::string& tok) {
    if (tok == "inf") return kInf;
    if (tok == "-inf") return -kInf;
    return std::stod(tok);
}

inline LpProblem read_lp_text(std::istream& in) {
    std::string word;
    in >> word;  // '#'
    std::string rest;
    std::getline(in, rest);
    in >> word;
    if (word != "maximize") throw Error("lp text: expected 'maximize'");
    std::getline(in, rest);
    std::string cost_line;
    std::getline(in, cost_line);
    std::stringstream cs(cost_line);
    std::vector<double> cost;
    while (cs >> word) cost.push_back(parse_bound_token(word));
    in >> word;
    if (word != "offset") throw Error("lp text: expected 'offset'");
    double ignored;
    in >> ignored;
    in >> word;
    if (word != "subject_to") throw Error("lp text: expected 'subject_to'");
    int rows;
    in >> rows;
    LpProblem p;
    const int n = static_cast<int>(cost.size());
    p.cost = Eigen::Map<Vec>(cost.data(), n);
    p.A.resize(rows, n);
    p.b.resize(rows);
    for (int r = 0; r < rows; ++r) {
        for (int j = 0; j < n; ++j) {
            in >> word;
            p.A(r, j) = parse_bound_token(word);
        }
        in >> word;  // '<='
        in >> word;
        p.b(r) = parse_bound_token(word);
    }
    in >> word;
    if (word != "bounds") throw Error("lp text: expected 'bounds'");
    p.lower.resize(n);
    p.upper.resize(n);
    for (int j = 0; j < n; ++j) {
        in >> word;
        p.lower(j) = parse_bound_token(word);
        in >> word;
        p.upper(j) = parse_bound_token(word);
    }
    return p;
}

inline LpProblem read_lp_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return read_lp_text(in);
}

}  // namespace stlmpc
