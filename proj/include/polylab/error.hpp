#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace polylab {

enum class ErrorCode {
    invalid_argument,
    file_not_found,
    missing_column,
    non_numeric_feature,
    single_class,
    stratification_infeasible,
    dimension_mismatch,
    training_diverged,
    layer_out_of_range,
    unwritable_path,
    empty_input,
    not_normalized,
    config_error,
    parse_error,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

// Raised by network training when the loss stops being finite.
class TrainingDiverged : public Error {
public:
    explicit TrainingDiverged(int epoch)
        : Error(ErrorCode::training_diverged,
                "training diverged: non-finite loss at epoch " + std::to_string(epoch)),
          epoch_(epoch) {}

    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, ErrorCode code, const std::string& what) {
    if (!condition) fail(code, what);
}

} // namespace polylab
