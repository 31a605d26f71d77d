#pragma once

#include <stdexcept>
#include <string>

namespace dpa {

// Bad input: malformed files, violated preconditions, degenerate data.
// The CLI maps this family to exit code 2.
class InvalidInputError : public std::invalid_argument {
public:
    explicit InvalidInputError(const std::string& what) : std::invalid_argument(what) {}
};

class DegenerateDataError : public InvalidInputError {
public:
    explicit DegenerateDataError(const std::string& what) : InvalidInputError(what) {}
};

// Numerical failure: root finding, divergence, singular systems. Exit code 3.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

class DivergenceError : public NumericError {
public:
    DivergenceError(const std::string& what, int step)
        : NumericError(what), step_(step) {}
    int step() const { return step_; }

private:
    int step_;
};

[[noreturn]] void throw_invalid(const std::string& what);

} // namespace dpa
