#pragma once

#include <stdexcept>
#include <string>

namespace starn {

// Base for every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration or API argument (exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Input data problems: schema, validation, graph construction (exit code 3).
class DataError : public Error {
public:
    using Error::Error;
};

class SchemaError : public DataError {
public:
    using DataError::DataError;
};

class ValidationError : public DataError {
public:
    ValidationError(const std::string& message, std::size_t row)
        : DataError(message), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

class ConnectivityError : public DataError {
public:
    ConnectivityError(const std::string& message, double lambda2, int components)
        : DataError(message), lambda2_(lambda2), components_(components) {}
    double lambda2() const noexcept { return lambda2_; }
    int components() const noexcept { return components_; }

private:
    double lambda2_;
    int components_;
};

// Shape mismatches and other misuse of the tensor layer.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Non-finite values, failed gradient checks (exit code 4).
class NumericError : public Error {
public:
    using Error::Error;
};

// Process exit code for an exception: 2 config, 3 data, 4 numeric, 1 other.
int exit_code_for(const std::exception& e) noexcept;

}  // namespace starn
