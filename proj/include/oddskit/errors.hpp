#pragma once

#include <stdexcept>
#include <string>

namespace oddskit {

// Bad parameters, malformed config, unknown keys, out-of-range settings.
// The CLI maps this to exit code 2.
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Unusable input data: empty series, schema mismatch, degenerate windows.
// The CLI maps this to exit code 3.
struct data_error : std::runtime_error {
    explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace oddskit
