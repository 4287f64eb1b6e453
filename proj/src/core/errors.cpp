#include "voltkernel/errors.hpp"

namespace voltkernel {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::invalid_argument: return "invalid_argument";
        case ErrorKind::dimension: return "dimension";
        case ErrorKind::parse: return "parse";
        case ErrorKind::topology: return "topology";
        case ErrorKind::io: return "io";
        case ErrorKind::solver: return "solver";
        case ErrorKind::config: return "config";
    }
    return "unknown";
}

}  // namespace voltkernel
