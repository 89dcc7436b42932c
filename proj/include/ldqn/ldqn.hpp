#pragma once

#include "ldqn/baselines.hpp"
#include "ldqn/data.hpp"
#include "ldqn/diagnostics.hpp"
#include "ldqn/master.hpp"
#include "ldqn/memory.hpp"
#include "ldqn/message.hpp"
#include "ldqn/objectives.hpp"
#include "ldqn/simulator.hpp"
#include "ldqn/trace.hpp"
#include "ldqn/types.hpp"
#include "ldqn/worker.hpp"
