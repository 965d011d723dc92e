#include "mfstop/errors.hpp"

namespace mfstop {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::GridError: return "GridError";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::CoefficientError: return "CoefficientError";
    case ErrorCode::LawError: return "LawError";
    case ErrorCode::TimeNotOnGrid: return "TimeNotOnGrid";
    case ErrorCode::ExpressionError: return "ExpressionError";
    case ErrorCode::LinearSolveError: return "LinearSolveError";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::MassLossError: return "MassLossError";
    case ErrorCode::NegativeDensity: return "NegativeDensity";
    case ErrorCode::CFLViolation: return "CFLViolation";
    case ErrorCode::InvalidPolicy: return "InvalidPolicy";
    case ErrorCode::CriterionNotLinear: return "CriterionNotLinear";
    case ErrorCode::NegativeRewardForDistortion: return "NegativeRewardForDistortion";
    case ErrorCode::EmptySample: return "EmptySample";
    case ErrorCode::BudgetExhausted: return "BudgetExhausted";
    case ErrorCode::PotentialHypothesisViolated: return "PotentialHypothesisViolated";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::DegenerateDiffusion: return "DegenerateDiffusion";
    case ErrorCode::AtomCountMismatch: return "AtomCountMismatch";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::MissingManifest: return "MissingManifest";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

static std::string join(const std::vector<Violation>& vs) {
    std::string out;
    for (const auto& v : vs) {
        if (!out.empty()) out += "; ";
        out += std::string(to_string(v.code)) + ": " + v.message;
    }
    return out;
}

ValidationError::ValidationError(std::vector<Violation> violations)
    : Error(violations.empty() ? ErrorCode::ConfigError : violations.front().code,
            "validation failed: " + join(violations)),
      violations_(std::move(violations)) {}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace mfstop
