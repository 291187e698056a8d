#pragma once

#include "hedgeflow/market_data.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace hedgeflow {

/// Names accepted by compute_indicators. Each is a fixed, conventional
/// parameterization; the prompt consumes a name->value map, so the set is
/// extensible without interface changes.
const std::vector<std::string>& supported_indicators();

/// The set the engine feeds to agent prompts by default.
const std::vector<std::string>& default_indicator_set();

/// Computes the requested indicators over `window` (values use only bars
/// inside the window). Indicators whose lookback exceeds the window are
/// omitted from the result, not reported as zero. Unknown names throw
/// ValidationError listing the supported set.
std::map<std::string, double> compute_indicators(std::span<const Bar> window,
                                                 const std::vector<std::string>& names);

} // namespace hedgeflow
