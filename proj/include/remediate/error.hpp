#pragma once

#include <stdexcept>
#include <string>

namespace remediate {

// Invalid configuration or arguments (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (CLI exit code 3).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DuplicateIdError : public DataError {
public:
    explicit DuplicateIdError(std::string id)
        : DataError("duplicate parcel id '" + id + "'"), id_(std::move(id)) {}
    const std::string& id() const noexcept { return id_; }

private:
    std::string id_;
};

class ArityError : public DataError {
public:
    ArityError(std::size_t line, std::size_t expected, std::size_t got)
        : DataError("line " + std::to_string(line) + ": expected " + std::to_string(expected) +
                    " fields, got " + std::to_string(got)),
          line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class UnknownParcelError : public DataError {
public:
    explicit UnknownParcelError(const std::string& id)
        : DataError("unknown parcel id '" + id + "'") {}
};

// A repeated observation disagrees with the materials already on record.
class ConflictError : public DataError {
public:
    ConflictError(std::string id, std::string existing, std::string incoming)
        : DataError("conflicting observation for '" + id + "': have " + existing + ", got " +
                    incoming),
          id_(std::move(id)),
          existing_(std::move(existing)),
          incoming_(std::move(incoming)) {}
    const std::string& id() const noexcept { return id_; }
    const std::string& existing() const noexcept { return existing_; }
    const std::string& incoming() const noexcept { return incoming_; }

private:
    std::string id_;
    std::string existing_;
    std::string incoming_;
};

}  // namespace remediate
