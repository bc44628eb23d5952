#pragma once

#include <stdexcept>
#include <string>

namespace mobiscope {

/// Base class for every failure the library reports by exception.
/// Argument-contract violations use std::invalid_argument instead.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A file or line does not match its documented schema.
class FormatError : public Error {
public:
    using Error::Error;
};

/// A tract polygon failed load-time validation.
class InvalidPolygon : public FormatError {
public:
    InvalidPolygon(const std::string& geoid, const std::string& why)
        : FormatError("invalid polygon for tract " + geoid + ": " + why), geoid_(geoid) {}

    const std::string& geoid() const noexcept { return geoid_; }

private:
    std::string geoid_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// A pipeline stage ran before the stage that produces its input.
class DependencyError : public Error {
public:
    DependencyError(const std::string& stage, const std::string& requires_stage, const std::string& path)
        : Error("stage '" + stage + "' needs the output of '" + requires_stage + "' (missing " + path + ")"),
          required_(requires_stage) {}

    const std::string& required_stage() const noexcept { return required_; }

private:
    std::string required_;
};

class GenerationError : public Error {
public:
    using Error::Error;
};

} // namespace mobiscope
