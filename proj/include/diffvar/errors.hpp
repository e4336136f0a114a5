#pragma once

#include <stdexcept>
#include <string>

namespace diffvar {

// Exit codes used by the CLI. Library code throws; the CLI maps to these.
enum ExitCode : int {
    exit_ok = 0,
    exit_config = 2,     // bad flags, bad specs, schema/validation failures
    exit_degenerate = 3, // degenerate estimate (constant outcome, near-zero variance, ...)
    exit_numeric = 4,    // internal numeric failure (non-convergence, rank loss, ...)
};

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
    virtual int exit_code() const { return exit_numeric; }
};

// Named column missing, malformed header, unknown config key.
struct SchemaError : Error {
    using Error::Error;
    int exit_code() const override { return exit_config; }
};

// A cell failed to parse, a non-finite value, treatment outside {0,1}.
struct ValidationError : Error {
    using Error::Error;
    int exit_code() const override { return exit_config; }
};

// Invalid option combinations or learner specs.
struct ConfigError : Error {
    using Error::Error;
    int exit_code() const override { return exit_config; }
};

// An arm smaller than the requested fold count.
struct InfeasibleFoldError : Error {
    using Error::Error;
    int exit_code() const override { return exit_config; }
};

// Estimation cannot proceed: empty arm, constant outcome, variance at or
// below the delta-method floor, negative one-step variance for the
// absolute contrast.
struct DegenerateError : Error {
    using Error::Error;
    int exit_code() const override { return exit_degenerate; }
};

// Solver non-convergence or rank loss that survived the ridge guard.
struct NumericError : Error {
    using Error::Error;
    int exit_code() const override { return exit_numeric; }
};

// A caller violated a documented precondition.
struct ContractError : Error {
    using Error::Error;
    int exit_code() const override { return exit_numeric; }
};

} // namespace diffvar
