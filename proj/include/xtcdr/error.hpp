// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace xtcdr {

/// Error categories shared by every module. The CLI maps each one onto a
/// stable process exit code (see `exit_code`).
enum class ErrorKind {
    Config,
    Io,
    Numeric,
    Data,
    Shape,
    Parse,
    Schema,
    Format,
    Usage,
    UndefinedMetric,
    Domain,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

const char* to_string(ErrorKind kind) noexcept;

/// 0 success, 2 configuration, 3 I/O, 4 numeric failure, 5 data.
int exit_code(ErrorKind kind) noexcept;

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace xtcdr
