#pragma once

#include <stdexcept>
#include <string>

namespace otag {

// Bad input (files, formats, CLI arguments). The CLI maps this to exit
// code 1; anything else escaping to main is an internal error (exit 2).
class UserError : public std::runtime_error {
 public:
  explicit UserError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace otag
