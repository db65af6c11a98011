#pragma once

#include <stdexcept>
#include <string>

namespace cammsr {

// Shape/axis violations (matmul mismatch, bad rank, empty axis).
struct DimError : std::runtime_error {
    explicit DimError(const std::string& msg) : std::runtime_error(msg) {}
};

// API contract violations (non-scalar loss, target id 0, all-masked input).
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// File parsing / format problems. Carries enough context to print and exit.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad run configuration (unknown keys, invalid variant names, missing paths).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss or tensor detected mid-run.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cammsr
