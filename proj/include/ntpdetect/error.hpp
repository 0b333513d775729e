#pragma once

#include <stdexcept>
#include <string>

namespace ntpdetect {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text (JSON syntax, wrong field type). Carries the 1-based line.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A record parsed but broke a schema invariant.
class ValidationError : public Error {
public:
    ValidationError(std::string record_id, std::string field, const std::string& what)
        : Error("record '" + record_id + "', field '" + field + "': " + what),
          record_id_(std::move(record_id)),
          field_(std::move(field)) {}

    [[nodiscard]] const std::string& record_id() const noexcept { return record_id_; }
    [[nodiscard]] const std::string& field() const noexcept { return field_; }

private:
    std::string record_id_;
    std::string field_;
};

/// Bad argument to an operation (length mismatch, empty input, out-of-range value).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Training could not proceed (single-class labels, non-finite kernel values).
class TrainingError : public Error {
public:
    using Error::Error;
};

} // namespace ntpdetect
