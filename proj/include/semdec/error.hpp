#pragma once

#include <stdexcept>
#include <string>

namespace semdec {

// Each error kind maps onto one CLI exit code (see cli.hpp).

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class IndexError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Raised by the feature-pack and checkpoint readers. `field()` names the
/// manifest key or blob that failed validation.
class FormatError : public std::runtime_error {
public:
    FormatError(std::string field, const std::string& what)
        : std::runtime_error(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Non-finite value produced by a loss or estimator. `component()` names it.
class NumericalError : public std::runtime_error {
public:
    NumericalError(std::string component, const std::string& what)
        : std::runtime_error(component + ": " + what), component_(std::move(component)) {}

    const std::string& component() const noexcept { return component_; }

private:
    std::string component_;
};

}  // namespace semdec
