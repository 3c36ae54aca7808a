#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace depthprior {

/// Input violates a mathematical precondition (empty batch, score outside [0,1], ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Malformed file contents. Carries the byte offset or line number when known.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}

    static FormatError at_byte(std::size_t offset, const std::string& what) {
        return FormatError("byte " + std::to_string(offset) + ": " + what);
    }
    static FormatError at_line(std::size_t line, const std::string& what) {
        return FormatError("line " + std::to_string(line) + ": " + what);
    }
};

/// A key (image id, reference threshold) is absent from a lookup structure.
class LookupError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Invalid configuration (knot count, bounds, strata).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace depthprior
