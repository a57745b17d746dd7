#pragma once

#include <stdexcept>
#include <string>

namespace gridcascade {

// Malformed input file (bad header, unparsable row). Carries the 1-based
// line number of the offending row when known.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& file, std::size_t line, const std::string& what)
        : std::runtime_error(file + ":" + std::to_string(line) + ": " + what),
          line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Input parsed but violates a data-model invariant.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caller passed an argument outside an operation's domain.
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Linear solve failed or residual check exceeded tolerance.
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, std::size_t component = npos)
        : std::runtime_error(what), component_(component) {}

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    [[nodiscard]] std::size_t component() const noexcept { return component_; }

private:
    std::size_t component_;
};

}  // namespace gridcascade
