#pragma once

#include <stdexcept>
#include <string>

namespace sentingram {

// Every recoverable failure in the library (bad input files, invalid
// configuration, violated preconditions on user data) is reported as an
// Error. Programming errors are checked with assert().
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sentingram
