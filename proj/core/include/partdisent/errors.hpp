#pragma once

#include <stdexcept>
#include <string>

namespace partdisent {

/// Invalid or unknown configuration values. Maps to CLI exit code 1.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unreadable inputs, inconsistent annotations, IO failures. Exit code 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite loss or parameters during optimization. Exit code 3.
class NumericError : public std::runtime_error {
public:
    NumericError(std::string component, const std::string& what)
        : std::runtime_error(what), component_(std::move(component)) {}

    const std::string& component() const noexcept { return component_; }

private:
    std::string component_;
};

}  // namespace partdisent
