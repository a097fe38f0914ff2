#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ppgtcn {

/// Shape or layout disagreement between tensors/specs.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Invalid argument value (empty batch, bad window size, ...).
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Backward requested with no recorded forward, or a corrupted tape.
class TapeError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Optimization blew up (NaN loss). Carries the epoch it happened in.
class TrainingError : public std::runtime_error {
public:
    TrainingError(const std::string& what, int epoch)
        : std::runtime_error(what), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

/// Malformed container file. Carries the byte offset of the defect.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}
    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

/// Operation called on a model that does not satisfy its precondition.
class PreconditionError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

} // namespace ppgtcn
