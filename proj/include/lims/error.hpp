#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lims {

// Root of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SyntaxError : public Error {
public:
    SyntaxError(std::size_t line, std::size_t column, std::string expected, const std::string& found);

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }
    const std::string& expected() const noexcept { return expected_; }

private:
    std::size_t line_;
    std::size_t column_;
    std::string expected_;
};

class MalformedUrl : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Backing data source failed to load or is not configured.
class ProviderUnavailable : public Error {
public:
    using Error::Error;
};

class UnknownListDate : public Error {
public:
    using Error::Error;
};

class ResolutionFailure : public Error {
public:
    using Error::Error;
};

class GeoUnknown : public Error {
public:
    using Error::Error;
};

class UnknownCondition : public Error {
public:
    using Error::Error;
};

// Inconclusive verification. Never converted into a failed decision.
class VerificationError : public Error {
public:
    using Error::Error;
};

class UnknownLink : public Error {
public:
    using Error::Error;
};

class StoreError : public Error {
public:
    using Error::Error;
};

} // namespace lims
