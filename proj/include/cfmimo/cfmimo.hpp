// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cfmimo/common.hpp"
#include "cfmimo/config.hpp"
#include "cfmimo/rng.hpp"
#include "cfmimo/scenario.hpp"
#include "cfmimo/metrics.hpp"
#include "cfmimo/scheme.hpp"
#include "cfmimo/training.hpp"
#include "cfmimo/bs_solver.hpp"
#include "cfmimo/ue_solver.hpp"
#include "cfmimo/orchestrator.hpp"
