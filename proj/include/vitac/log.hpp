#pragma once

#include <functional>
#include <string_view>

namespace vitac {

using WarningHandler = std::function<void(std::string_view)>;

// Replaces the process-wide warning sink; an empty handler restores stderr.
void set_warning_handler(WarningHandler handler);
void warn(std::string_view message);

}  // namespace vitac
