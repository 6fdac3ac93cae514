#pragma once

#include "statarb/analytics.hpp"
#include "statarb/backtest.hpp"
#include "statarb/config.hpp"
#include "statarb/core.hpp"
#include "statarb/csv.hpp"
#include "statarb/factors.hpp"
#include "statarb/lstm.hpp"
#include "statarb/marketdata.hpp"
#include "statarb/ou.hpp"
#include "statarb/pipeline.hpp"
#include "statarb/regression.hpp"
#include "statarb/signals.hpp"
#include "statarb/stats.hpp"

namespace statarb {
inline constexpr const char* kVersion = "0.1.0";
}
