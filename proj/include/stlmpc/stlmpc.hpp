// Umbrella header.

#pragma once

#include "stlmpc/common.hpp"
#include "stlmpc/controller.hpp"
#include "stlmpc/encoder.hpp"
#include "stlmpc/formula.hpp"
#include "stlmpc/io.hpp"
#include "stlmpc/linprog.hpp"
#include "stlmpc/robustness.hpp"
#include "stlmpc/scenario.hpp"
#include "stlmpc/system.hpp"
