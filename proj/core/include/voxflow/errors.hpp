#pragma once

#include <stdexcept>
#include <string>

namespace voxflow {

// Error categories map 1:1 onto CLI exit codes. Everything thrown by the
// library is an Error; plain std::exception escaping a command is a bug.
enum class ErrorKind {
    usage = 2,      // bad arguments, bad config values, parameter domain errors
    io = 3,         // file access and format violations
    numeric = 4,    // non-finite values, degenerate numeric inputs, shape mismatches
    cache = 5,      // cache misses and layout/alignment violations
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }
    int exit_code() const { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

inline Error usage_error(const std::string& msg) { return Error(ErrorKind::usage, msg); }
inline Error io_error(const std::string& msg) { return Error(ErrorKind::io, msg); }
inline Error numeric_error(const std::string& msg) { return Error(ErrorKind::numeric, msg); }
inline Error cache_error(const std::string& msg) { return Error(ErrorKind::cache, msg); }

}  // namespace voxflow
