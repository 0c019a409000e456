#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ssg {

enum class ErrorCode {
  invalid_input,
  invalid_state,
  io_error,
  format_error,
  config_error,
  training_diverged,
  internal,
};

// Single exception type used across the core; the C boundary maps `code`
// to a status value and keeps `what()` for ssg_last_error().
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, std::string msg) : std::runtime_error(std::move(msg)), code_(code) {}
  ErrorCode code() const { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, std::string msg) { throw Error(code, std::move(msg)); }

#define SSG_CHECK(cond, code, msg)                   \
  do {                                               \
    if (!(cond)) ::ssg::fail(::ssg::ErrorCode::code, (msg)); \
  } while (0)

struct Dims3 {
  int64_t d = 0, h = 0, w = 0;
  int64_t volume() const { return d * h * w; }
  bool operator==(const Dims3&) const = default;
};

inline std::string dims_str(const Dims3& d) {
  return std::to_string(d.d) + "x" + std::to_string(d.h) + "x" + std::to_string(d.w);
}

}  // namespace ssg
