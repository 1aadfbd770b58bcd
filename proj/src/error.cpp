// SPDX-License-Identifier: Apache-2.0
#include "xtcdr/error.hpp"

namespace xtcdr {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Config: return "configuration error";
        case ErrorKind::Io: return "I/O error";
        case ErrorKind::Numeric: return "numeric error";
        case ErrorKind::Data: return "data error";
        case ErrorKind::Shape: return "shape error";
        case ErrorKind::Parse: return "parse error";
        case ErrorKind::Schema: return "schema error";
        case ErrorKind::Format: return "format error";
        case ErrorKind::Usage: return "usage error";
        case ErrorKind::UndefinedMetric: return "undefined metric";
        case ErrorKind::Domain: return "domain error";
    }
    return "error";
}

int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Config:
        case ErrorKind::Usage:
            return 2;
        case ErrorKind::Io:
            return 3;
        case ErrorKind::Numeric:
            return 4;
        default:
            return 5;
    }
}

}  // namespace xtcdr
