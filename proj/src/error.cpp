#include "panelreg/error.hpp"

namespace panelreg {

ParseError::ParseError(const std::string& what, std::uint64_t line)
    : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}

}  // namespace panelreg
