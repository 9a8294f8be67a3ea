#pragma once

#include "stlmpc/common.hpp"

namespace stlmpc {

// Discrete-time LTI plant x(k+1) = A x(k) + B u(k), full state output.
// Inputs are box-constrained componentwise.
struct LtiSystem {
    Mat A;
    Mat B;
    double dt = 1.0;  // seconds per step
    Vec u_min, u_max;

    int state_dim() const { return static_cast<int>(A.rows()); }
    int input_dim() const { return static_cast<int>(B.cols()); }

    void validate() const {
        if (A.rows() != A.cols()) throw DimensionError("LtiSystem: A must be square");
        if (B.rows() != A.rows()) throw DimensionError("LtiSystem: B row count must match A");
        if (u_min.size() != B.cols() || u_max.size() != B.cols())
            throw DimensionError("LtiSystem: input bounds must have one entry per input");
        for (int i = 0; i < input_dim(); ++i)
            if (u_min(i) > u_max(i))
                throw DimensionError("LtiSystem: u_min > u_max for input " + std::to_string(i));
        if (!A.allFinite() || !B.allFinite()) throw DimensionError("LtiSystem: non-finite entry");
        if (!(dt > 0)) throw DimensionError("LtiSystem: sampling period must be positive");
    }

    Vec step(const Vec& x, const Vec& u) const { return A * x + B * u; }
};

}  // namespace stlmpc
