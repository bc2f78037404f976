#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace extend3d {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shapes or extents of two operands disagree.
class DimensionError : public Error {
public:
    using Error::Error;
};

class BoundsError : public Error {
public:
    using Error::Error;
};

// Invalid user configuration (bad dims, d not dividing K, unknown config key...).
class ConfigError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class ProviderError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, int step) : Error(what), step_(step) {}
    int step() const noexcept { return step_; }

private:
    int step_;
};

class OptimizationError : public Error {
public:
    using Error::Error;
    OptimizationError(const std::string& what, std::vector<double> trace) : Error(what), trace_(std::move(trace)) {}
    /// Losses recorded before the failure, when raised mid-run.
    const std::vector<double>& trace() const noexcept { return trace_; }

private:
    std::vector<double> trace_;
};

class ProtocolError : public Error {
public:
    using Error::Error;
};

}  // namespace extend3d
