#pragma once

#include <stdexcept>
#include <string>

namespace lempart {

enum class ErrorCode {
    // input errors (exit 2)
    CycleDetected,
    DisconnectedGraph,
    ProsumerNotLeaf,
    NonPositiveLimit,
    UnknownNode,
    EmptyMemberSet,
    UnknownProsumer,
    InvalidPartition,
    MissingProsumerSeries,
    InvalidParameter,
    ParseError,
    AssumptionViolated,
    RequiresPerfectForecasts,
    // resource caps (exit 3)
    TooManyProsumers,
    ExponentialBlowup,
    // solver failures (exit 4)
    Infeasible,
    Unbounded,
    SolverFailure,
    LPFailure,
    MissingDuals,
};

const char* error_name(ErrorCode code);
int exit_code_for(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

}  // namespace lempart
