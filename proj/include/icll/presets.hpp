#pragma once

#include "icll/training.hpp"

#include <map>

namespace icll {

/// Named run configurations: smoke_* (seconds, used by tests), desk_*
/// (minutes on one core), paper_* (full-scale settings), scaling and
/// ablation grids, and the shortcut-injection pairs.
const std::map<std::string, RunConfig>& preset_library();

RunConfig get_preset(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace icll
