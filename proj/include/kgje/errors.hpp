#pragma once

#include <stdexcept>
#include <string>

namespace kgje {

// Shape disagreement between operands (message names the offending shapes).
struct DimError : std::runtime_error {
    explicit DimError(const std::string& msg) : std::runtime_error("dimension error: " + msg) {}
};

// Non-finite or otherwise out-of-domain numeric input.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

// API misuse (wrong call order, bad argument).
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error("usage error: " + msg) {}
};

// Unknown name in a vocabulary or store.
struct LookupError : std::runtime_error {
    explicit LookupError(const std::string& msg) : std::runtime_error("lookup error: " + msg) {}
};

// Malformed text input; carries a 1-based line number when known.
struct ParseError : std::runtime_error {
    ParseError(const std::string& file, long line, const std::string& msg)
        : std::runtime_error("parse error: " + file + ":" + std::to_string(line) + ": " + msg) {}
    explicit ParseError(const std::string& msg) : std::runtime_error("parse error: " + msg) {}
};

// Bad binary file (magic, version, truncation).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error("format error: " + msg) {}
};

// Invalid or inconsistent configuration.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

}  // namespace kgje
