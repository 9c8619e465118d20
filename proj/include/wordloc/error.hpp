#pragma once

#include <stdexcept>
#include <string>

namespace wordloc {

// Domain errors map to exit code 1, usage errors (bad arguments, unwritable
// output locations) to exit code 2.
enum class ErrorKind { Domain = 1, Usage = 2 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(const std::string& message) {
    throw Error(ErrorKind::Domain, message);
}

[[noreturn]] inline void usage_error(const std::string& message) {
    throw Error(ErrorKind::Usage, message);
}

} // namespace wordloc
