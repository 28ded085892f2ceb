#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace srim {

// Bad argument or shape mismatch passed to a library function.
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// File exists but its contents cannot be decoded.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Dataset-level problems: empty directories, duplicate names, bad manifests.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(std::int64_t iteration, const std::string& what)
        : std::runtime_error("training diverged at iteration " + std::to_string(iteration) + ": " + what),
          iteration_(iteration) {}

    std::int64_t iteration() const noexcept { return iteration_; }

private:
    std::int64_t iteration_;
};

}  // namespace srim
