#pragma once

#include <stdexcept>
#include <string>

namespace dmx {

// Bad arguments to an operation (dimension mismatch, empty input, ...).
struct InvalidInput : std::invalid_argument {
    explicit InvalidInput(const std::string& msg) : std::invalid_argument(msg) {}
};

// Bad experiment configuration; the CLI maps this to exit code 2.
struct InvalidConfig : std::runtime_error {
    explicit InvalidConfig(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed external file (dataset, checkpoint, run directory).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values encountered during computation; CLI exit code 3.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace dmx
