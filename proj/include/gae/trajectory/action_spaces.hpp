#pragma once

#include <string>
#include <vector>

#include "gae/trajectory/types.hpp"

namespace gae::trajectory {

/// Action definitions shipped for the five supported sources:
/// Mind2Web, WebLINX, WebArena, GUIAct, AutoWebGLM.
const std::vector<ActionSpaceDef>& builtin_action_spaces();

/// Throws UserError for an unknown source.
const ActionSpaceDef& builtin_action_space(const std::string& source);

}  // namespace gae::trajectory
