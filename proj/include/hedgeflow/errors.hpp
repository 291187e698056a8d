#pragma once

#include <stdexcept>
#include <string>

namespace hedgeflow {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed input file or text (carries line/field context in the message).
struct ParseError : Error {
    using Error::Error;
};

/// Data violates a domain invariant (bad OHLC, dimension mismatch, ...).
struct ValidationError : Error {
    using Error::Error;
};

/// Operation needs a longer history window than was supplied.
struct InsufficientHistoryError : Error {
    using Error::Error;
};

/// Run configuration is invalid; message enumerates every problem found.
struct ConfigError : Error {
    using Error::Error;
};

/// Replay diverged from the recorded cassette.
struct DeterminismError : Error {
    using Error::Error;
};

struct GatewayError : Error {
    using Error::Error;
};

/// Prompt skeleton referenced a placeholder that was not supplied.
struct TemplateError : Error {
    using Error::Error;
};

/// Engine state invariant breached mid-run; message includes a state dump.
struct EngineError : Error {
    using Error::Error;
};

struct MetricError : Error {
    using Error::Error;
};

} // namespace hedgeflow
