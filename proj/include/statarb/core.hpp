#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace statarb {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kTradingDaysPerYear = 252.0;
/// One trading day, in years.
inline constexpr double kDt = 1.0 / kTradingDaysPerYear;

/// Deterministic sub-seed for an independent stream (splitmix64 finaliser).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Error taxonomy. The CLI maps ConfigError -> exit 2, DataError -> exit 3,
// DivergenceError -> exit 4; everything else is a bug or a contract breach.

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (bad CSV rows, missing tickers, misalignment).
class DataError : public Error {
public:
    using Error::Error;
};

class ParseError : public DataError {
public:
    ParseError(const std::string& what, std::size_t line)
        : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Precondition violated by the caller; indicates a programming error.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Input is numerically degenerate (zero variance, singular design, ...).
class DegenerateError : public Error {
public:
    using Error::Error;
};

class InsufficientWindowError : public Error {
public:
    using Error::Error;
};

/// AR(1) coefficient outside (0, 1): the series does not mean-revert.
class NonMeanRevertingError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public Error {
public:
    using Error::Error;
};

class BankruptcyError : public Error {
public:
    using Error::Error;
};

}  // namespace statarb
