#pragma once

#include <stdexcept>
#include <string>

namespace wsciss {

/// Base of every error thrown by the library. `kind()` is a stable tag used
/// in machine-readable error records.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual const char* kind() const noexcept { return "error"; }
};

class ValidationError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "validation"; }
};

class RangeError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "range"; }
};

class ConfigError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "config"; }
};

class IoError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "io"; }
};

class OracleError : public Error {
public:
    OracleError(const std::string& sample_id, const std::string& what)
        : Error("oracle failed on sample '" + sample_id + "': " + what), sample_id_(sample_id) {}
    const char* kind() const noexcept override { return "oracle"; }
    const std::string& sample_id() const noexcept { return sample_id_; }

private:
    std::string sample_id_;
};

/// Raised when a training loss becomes NaN/inf; names the offending term.
class NumericError : public Error {
public:
    NumericError(const std::string& term, const std::string& what)
        : Error(what), term_(term) {}
    const char* kind() const noexcept override { return "numeric"; }
    const std::string& term() const noexcept { return term_; }

private:
    std::string term_;
};

class MetricError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "undefined_metric"; }
};

class MissingArtifactError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "missing_artifact"; }
};

}  // namespace wsciss
