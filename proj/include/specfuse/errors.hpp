#pragma once

#include <stdexcept>
#include <string>

namespace specfuse {

/// Shape or dimension mismatch between tensors. Messages name both shapes.
class ShapeError : public std::invalid_argument {
public:
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// A caller violated an operation precondition (non-scalar backward,
/// missing gradient, batch too small, non-power-of-two image, ...).
class ContractError : public std::logic_error {
public:
    explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

/// Invalid configuration value; messages name the offending field.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// File import/export failure; messages name the file.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace specfuse
