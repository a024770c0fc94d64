#pragma once

#include <stdexcept>
#include <string>

namespace voxsep {

// Config/usage problems map to CLI exit code 1, everything else to 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {
[[noreturn]] inline void check_fail(const std::string& msg, const char* file, int line) {
  throw std::runtime_error(std::string(file) + ":" + std::to_string(line) + ": " + msg);
}
}  // namespace detail

}  // namespace voxsep

#define VX_CHECK(cond, msg) \
  do { if (!(cond)) ::voxsep::detail::check_fail((msg), __FILE__, __LINE__); } while (0)
