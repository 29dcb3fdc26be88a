#include "vqatom/util/format.hpp"

#include <charconv>

namespace vqatom {

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace vqatom
