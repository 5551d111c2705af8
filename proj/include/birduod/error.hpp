#pragma once

#include <stdexcept>
#include <string>

namespace birduod {

// Exit codes used by the command line tool.
enum class ExitCode : int { ok = 0, usage = 1, data = 2, numerical = 3 };

/// Bad arguments or configuration supplied by the caller.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Missing, malformed, or inconsistent on-disk data.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite loss, diverged optimization, or similar numerical failure.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace birduod
