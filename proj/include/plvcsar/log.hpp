#pragma once

#include <string>

namespace plvcsar {

// Emits a warning to stderr at most once per distinct message.
void warn(const std::string& message);

// Globally enables or disables warning output (on by default).
void set_warnings_enabled(bool enabled);

}  // namespace plvcsar
