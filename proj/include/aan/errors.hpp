#pragma once

#include <stdexcept>
#include <string>

namespace aan {

// Shapes or widths that do not line up.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// NaN/Inf where finite values are required.
struct NumericError : std::domain_error {
    using std::domain_error::domain_error;
};

// A hyperparameter or argument outside its allowed range.
struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Caller broke a precondition (lengths, scalar-ness, fully masked rows...).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Feature files whose layout does not match the modality table.
struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CompletenessError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RangeError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

// Training diverged; the message carries the epoch.
struct TrainingError : std::runtime_error {
    TrainingError(const std::string& what, int epoch) : std::runtime_error(what), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

   private:
    int epoch_;
};

}  // namespace aan
