#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mfstop {

enum class ErrorCode {
    GridError,
    GridMismatch,
    CoefficientError,
    LawError,
    TimeNotOnGrid,
    ExpressionError,
    LinearSolveError,
    NonConvergence,
    MassLossError,
    NegativeDensity,
    CFLViolation,
    InvalidPolicy,
    CriterionNotLinear,
    NegativeRewardForDistortion,
    EmptySample,
    BudgetExhausted,
    PotentialHypothesisViolated,
    InsufficientSamples,
    DegenerateDiffusion,
    AtomCountMismatch,
    ConfigError,
    MissingManifest,
    IoError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what);
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

// validate_spec collects every violation instead of stopping at the first one.
struct Violation {
    ErrorCode code;
    std::string message;
};

class ValidationError : public Error {
public:
    explicit ValidationError(std::vector<Violation> violations);
    const std::vector<Violation>& violations() const noexcept { return violations_; }

private:
    std::vector<Violation> violations_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

}  // namespace mfstop
