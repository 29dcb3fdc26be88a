#pragma once

#include <string>

namespace vqatom {

// Shortest decimal string that parses back to exactly v.
std::string format_double(double v);

}  // namespace vqatom
