#pragma once

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>
#include <string>

namespace stlmpc {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Syntax error in a formula string; `position` is a 0-based byte offset.
struct ParseError : Error {
    std::size_t position;
    ParseError(const std::string& msg, std::size_t pos)
        : Error(msg + " (at position " + std::to_string(pos) + ")"), position(pos) {}
};

// A signal window does not cover the steps an evaluation needs.
struct WindowError : Error {
    using Error::Error;
};

struct DimensionError : Error {
    using Error::Error;
};

// Anything wrong with a scenario file or its cross-field consistency.
struct ScenarioError : Error {
    using Error::Error;
};

// A specification outside the encodable fragment, or invalid encoder inputs.
struct EncodeError : Error {
    using Error::Error;
};

}  // namespace stlmpc
