#include "lempart/error.hpp"

namespace lempart {

const char* error_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::CycleDetected: return "CycleDetected";
        case ErrorCode::DisconnectedGraph: return "DisconnectedGraph";
        case ErrorCode::ProsumerNotLeaf: return "ProsumerNotLeaf";
        case ErrorCode::NonPositiveLimit: return "NonPositiveLimit";
        case ErrorCode::UnknownNode: return "UnknownNode";
        case ErrorCode::EmptyMemberSet: return "EmptyMemberSet";
        case ErrorCode::UnknownProsumer: return "UnknownProsumer";
        case ErrorCode::InvalidPartition: return "InvalidPartition";
        case ErrorCode::MissingProsumerSeries: return "MissingProsumerSeries";
        case ErrorCode::InvalidParameter: return "InvalidParameter";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::AssumptionViolated: return "AssumptionViolated";
        case ErrorCode::RequiresPerfectForecasts: return "RequiresPerfectForecasts";
        case ErrorCode::TooManyProsumers: return "TooManyProsumers";
        case ErrorCode::ExponentialBlowup: return "ExponentialBlowup";
        case ErrorCode::Infeasible: return "Infeasible";
        case ErrorCode::Unbounded: return "Unbounded";
        case ErrorCode::SolverFailure: return "SolverFailure";
        case ErrorCode::LPFailure: return "LPFailure";
        case ErrorCode::MissingDuals: return "MissingDuals";
    }
    return "Unknown";
}

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::TooManyProsumers:
        case ErrorCode::ExponentialBlowup:
            return 3;
        case ErrorCode::Infeasible:
        case ErrorCode::Unbounded:
        case ErrorCode::SolverFailure:
        case ErrorCode::LPFailure:
        case ErrorCode::MissingDuals:
            return 4;
        default:
            return 2;
    }
}

}  // namespace lempart
