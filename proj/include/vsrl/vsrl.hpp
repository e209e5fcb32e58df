#pragma once

#include "vsrl/action.hpp"
#include "vsrl/commands.hpp"
#include "vsrl/config.hpp"
#include "vsrl/env.hpp"
#include "vsrl/geometry.hpp"
#include "vsrl/metrics.hpp"
#include "vsrl/netproto.hpp"
#include "vsrl/physics.hpp"
#include "vsrl/policies.hpp"
#include "vsrl/reward.hpp"
#include "vsrl/sim2real.hpp"
#include "vsrl/stats.hpp"
