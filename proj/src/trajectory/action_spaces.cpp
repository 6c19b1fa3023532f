#include "gae/trajectory/action_spaces.hpp"

#include "gae/common/error.hpp"

namespace gae::trajectory {

const std::vector<ActionSpaceDef>& builtin_action_spaces() {
  static const std::vector<ActionSpaceDef> spaces = {
      {"Mind2Web",
       {
           {"click", "Simulates a mouse click on the target element (bounding box)."},
           {"type", "Types the specified value (str) into the target text input element (bounding box)."},
           {"select", "Selects the specified value (str) from a target dropdown element (bounding box)."},
       }},
      {"WebLINX",
       {
           {"click", "Simulates a mouse click on the target element (bounding box)."},
           {"hover", "Simulates hovering over the target element (bounding box)."},
           {"textInput", "Types the value (str) into the target element (bounding box)."},
           {"change", "Changes the value of the target element (bounding box) to the specified value (str)."},
           {"load", "Loads the webpage at the specified url value (str)."},
           {"submit", "Submits the form identified by the target element (bounding box)."},
           {"scroll", "Scrolls the page to the specified coordinate values in the list of floats [x, y]."},
           {"copy", "Copies the specified text value (str) from the target element (bounding box)."},
           {"paste", "Pastes the specified text value (str) into the target element (bounding box)."},
       }},
      {"WebArena",
       {
           {"click", "Simulates a mouse click on the target element (bounding box)."},
           {"press", "Simulates the pressing of a key combination value (str) on the target element (bounding box)."},
           {"selectOption", "Selects the specified option value (str) from the target dropdown element (bounding box)."},
           {"check", "Checks the target checkbox element (bounding box)."},
       }},
      {"GUIAct",
       {
           {"click", "Clicks on the target element (bounding box)."},
           {"hover", "Hovers over the target element (bounding box)."},
           {"input", "Inputs the given text value (str) into the target element (bounding box)."},
           {"scroll", "Scrolls the screen by the values in the list of coordinate floats [down, right], "
                      "where down represents vertical scroll and right represents horizontal scroll."},
           {"select_text", "Selects text by dragging across the specified coordinate values in the list of "
                           "floats [x1, y1, x2, y2], where (x1, y1) is the starting point and (x2, y2) is "
                           "the ending point."},
           {"copy", "Copies the specified text value (str) to the clipboard."},
           {"enter", "Simulates pressing the Enter key."},
           {"select", "Selects the text value (str) in the target element (bounding box)."},
           {"answer", "Provides an answer or response specified by text value (str) to the user."},
       }},
      {"AutoWebGLM",
       {
           {"click", "Clicks on the target element (bounding box)."},
           {"hover", "Hovers over the target element (bounding box)."},
           {"select", "Selects the option value (str) from a dropdown target element (bounding box)."},
           {"type_string", "Types the specified content (str) into the target element (bounding box) and "
                           "presses Enter if press_enter (bool) is True. The action value is a list "
                           "[content, press_enter]."},
           {"scroll_page", "Scrolls the page in the specified direction value ('up' or 'down')."},
           {"go", "Navigates browser history in the specified direction value ('forward' or 'backward')."},
           {"jump_to", "Opens the specified url (str) and optionally in a new tab if new_tab (bool) is True. "
                       "The action value is a list [url, new_tab]."},
           {"switch_tab", "Switches to a browser tab specified by the value tab_index (int)."},
           {"user_input", "Displays the specified message (str) to obtain user input."},
           {"finish", "Completes the task with an optional answer value (str or None)."},
       }},
  };
  return spaces;
}

const ActionSpaceDef& builtin_action_space(const std::string& source) {
  for (const auto& s : builtin_action_spaces()) {
    if (s.source_name == source) return s;
  }
  throw UserError("no built-in action space for source '" + source + "'");
}

}  // namespace gae::trajectory
