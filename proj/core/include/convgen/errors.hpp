#pragma once
// Error taxonomy shared across the generation pipeline.
//
// Everything derives from Error so callers can catch the whole family;
// the per-class types exist because several carry structured payloads
// (byte offsets, turn indices, salvageable prefixes).

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace convgen {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Transport / timeout / script-exhausted failures from an LLM provider.
class ProviderError : public Error {
public:
    using Error::Error;
};

// A provider reply (or file record) that violates the expected output format.
class ParseError : public Error {
public:
    using Error::Error;
};

// DSL parse failure. Carries the byte offset of the offending token and
// the token classes that would have been accepted there.
class SyntaxError : public Error {
public:
    SyntaxError(const std::string& what, std::size_t offset,
                std::vector<std::string> expected)
        : Error(what), offset_(offset), expected_(std::move(expected)) {}

    std::size_t offset() const { return offset_; }
    const std::vector<std::string>& expected() const { return expected_; }

private:
    std::size_t offset_;
    std::vector<std::string> expected_;
};

class TypeMismatch : public Error {
public:
    using Error::Error;
};

class UnknownIntent : public Error {
public:
    using Error::Error;
};

class UnknownVariable : public Error {
public:
    using Error::Error;
};

class InvalidTransition : public Error {
public:
    using Error::Error;
};

class DanglingVarRef : public Error {
public:
    using Error::Error;
};

class SpanViolation : public Error {
public:
    using Error::Error;
};

class MissingToken : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Malformed dataset / plan / prediction record. line() is 1-based.
class SchemaError : public Error {
public:
    SchemaError(const std::string& what, std::size_t line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class AlignmentError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace convgen
